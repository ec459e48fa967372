//! Live operator commands: a bounded queue into the simulation loop and a
//! tick-stamped log that replays them deterministically.

use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};

use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::scalar::Real;

/// Operator-side target for one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct LiveCommand<T> {
    pub arm: usize,
    pub pose: Pose<T>,
    /// Gripper opening in `[0, 1]`; carried through, not actuated.
    pub grip: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SendRejected {
    #[error("command queue full")]
    Full,
    #[error("simulation loop stopped")]
    Disconnected,
}

#[derive(Clone, Debug)]
pub struct CommandSender<T> {
    inner: SyncSender<LiveCommand<T>>,
}

impl<T> CommandSender<T> {
    /// Never blocks; a full queue rejects the command.
    pub fn try_send(&self, cmd: LiveCommand<T>) -> Result<(), SendRejected> {
        self.inner.try_send(cmd).map_err(|e| match e {
            TrySendError::Full(_) => SendRejected::Full,
            TrySendError::Disconnected(_) => SendRejected::Disconnected,
        })
    }
}

#[derive(Debug)]
pub struct CommandReceiver<T> {
    inner: Receiver<LiveCommand<T>>,
}

impl<T> CommandReceiver<T> {
    /// Everything queued so far, in arrival order.
    pub fn drain(&self) -> Vec<LiveCommand<T>> {
        self.inner.try_iter().collect()
    }
}

/// Bounded command queue between the network side and the loop.
pub fn command_channel<T>(capacity: usize) -> (CommandSender<T>, CommandReceiver<T>) {
    let (tx, rx) = mpsc::sync_channel(capacity.max(1));
    (CommandSender { inner: tx }, CommandReceiver { inner: rx })
}

/// A command as applied at the start of tick `tick`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct LoggedCommand<T> {
    pub tick: u64,
    #[serde(flatten)]
    pub command: LiveCommand<T>,
}

/// Commands in application order, replayable against a fresh simulation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandLog<T> {
    entries: Vec<LoggedCommand<T>>,
    cursor: usize,
}

impl<T: Real> CommandLog<T> {
    /// Sorts stably by tick so same-tick commands keep their order.
    pub fn new(mut entries: Vec<LoggedCommand<T>>) -> Self {
        entries.sort_by_key(|e| e.tick);
        Self { entries, cursor: 0 }
    }

    pub fn push(&mut self, tick: u64, command: LiveCommand<T>) {
        debug_assert!(self.entries.last().is_none_or(|e| e.tick <= tick));
        self.entries.push(LoggedCommand { tick, command });
    }

    pub fn entries(&self) -> &[LoggedCommand<T>] {
        &self.entries
    }

    /// Commands stamped with `tick`, advancing the replay cursor past them.
    pub fn take_due(&mut self, tick: u64) -> &[LoggedCommand<T>] {
        let start = self.cursor;
        while self.cursor < self.entries.len() && self.entries[self.cursor].tick <= tick {
            self.cursor += 1;
        }
        &self.entries[start..self.cursor]
    }
}
