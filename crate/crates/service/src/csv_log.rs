//! Telemetry CSV: a version comment line, a header row, then one row per arm
//! per tick. Floats use the shortest text that round-trips; absent values are
//! empty cells.

use std::io::Write;

use teleqp_core::sim::{ArmTelemetry, TelemetryRecord};

pub const CSV_VERSION: &str = "# teleqp telemetry csv v1";

pub struct CsvSink<W: Write> {
    inner: ::csv::Writer<W>,
    dof: usize,
    row: Vec<String>,
}

/// Column names for arms with up to `dof` joints.
pub fn header(dof: usize) -> Vec<String> {
    let mut h: Vec<String> = ["tick", "time", "arm"].map(String::from).to_vec();
    h.extend((1..=dof).map(|i| format!("q{i}")));
    h.extend((1..=dof).map(|i| format!("qdot{i}")));
    h.extend(
        [
            "err_x", "err_y", "err_z", "err_norm", "rot_err_norm", "d_es", "dist_es", "w_es", "active_rows", "status",
            "force_x", "force_y", "force_z", "clamp", "tip_x", "tip_y", "tip_z", "tip_qw", "tip_qx", "tip_qy", "tip_qz",
        ]
        .map(String::from),
    );
    h
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl<W: Write> CsvSink<W> {
    /// Writes the version line and header. `dof` is the largest joint count
    /// over all arms; shorter arms leave trailing joint cells empty.
    pub fn new(mut out: W, dof: usize) -> std::io::Result<Self> {
        writeln!(out, "{CSV_VERSION} dof={dof}")?;
        let mut inner = ::csv::Writer::from_writer(out);
        inner.write_record(header(dof))?;
        Ok(Self { inner, dof, row: Vec::new() })
    }

    pub fn write(&mut self, record: &TelemetryRecord<f64>) -> std::io::Result<()> {
        for arm in &record.arms {
            self.fill(record, arm);
            self.inner.write_record(&self.row)?;
        }
        Ok(())
    }

    fn fill(&mut self, record: &TelemetryRecord<f64>, a: &ArmTelemetry<f64>) {
        let r = &mut self.row;
        r.clear();
        r.push(record.tick.to_string());
        r.push(num(record.time));
        r.push((a.arm + 1).to_string());
        for v in [&a.q, &a.qdot] {
            r.extend(v.iter().map(|x| num(*x)));
            r.extend(std::iter::repeat_n(String::new(), self.dof.saturating_sub(v.len())));
        }
        r.extend(a.translation_error.iter().map(|x| num(*x)));
        r.push(num(a.translation_error_norm));
        r.push(num(a.rotation_error_norm));
        for v in [a.d_es, a.distance_es, a.w_es] {
            r.push(v.map(num).unwrap_or_default());
        }
        r.push(a.active_rows.to_string());
        r.push(a.status.map(|s| s.as_str()).unwrap_or("error").to_string());
        r.extend(a.force.iter().map(|x| num(*x)));
        r.push(num(a.clamp_correction));
        r.extend(a.pose.t.imag_array().iter().map(|x| num(*x)));
        r.extend(a.pose.r.vec4().iter().map(|x| num(*x)));
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> std::io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}
