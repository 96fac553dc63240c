//! Fault injection points for the durable stores.

use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultKind {
    /// The write is refused before any byte reaches the file.
    Error,
    /// Part of the record reaches the file, then the write fails.
    TornWrite,
}

#[derive(Debug, Default)]
struct State {
    remaining: u64,
    always: bool,
    kind: Option<FaultKind>,
    triggered: u64,
}

/// A switch consulted at the start of every durable write of one store.
#[derive(Debug, Default)]
pub struct FailPoint {
    state: Mutex<State>,
}

impl FailPoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fail the next `n` writes.
    pub fn fail_next(&self, n: u64) {
        self.arm(n, false, FaultKind::Error);
    }

    /// Fail the next write after writing half of its bytes.
    pub fn fail_next_torn(&self) {
        self.arm(1, false, FaultKind::TornWrite);
    }

    pub fn fail_always(&self) {
        self.arm(0, true, FaultKind::Error);
    }

    pub fn clear(&self) {
        let mut s = self.state.lock().unwrap();
        s.remaining = 0;
        s.always = false;
        s.kind = None;
    }

    /// Number of writes failed so far.
    pub fn triggered(&self) -> u64 {
        self.state.lock().unwrap().triggered
    }

    fn arm(&self, n: u64, always: bool, kind: FaultKind) {
        let mut s = self.state.lock().unwrap();
        s.remaining = n;
        s.always = always;
        s.kind = Some(kind);
    }

    /// Consumes one armed failure, if any.
    pub fn check(&self) -> Option<FaultKind> {
        let mut s = self.state.lock().unwrap();
        let kind = s.kind?;
        if s.always {
            s.triggered += 1;
            return Some(kind);
        }
        if s.remaining == 0 {
            return None;
        }
        s.remaining -= 1;
        s.triggered += 1;
        if s.remaining == 0 {
            s.kind = None;
        }
        Some(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fail_next_counts_down() {
        let fp = FailPoint::new();
        assert_eq!(fp.check(), None);
        fp.fail_next(2);
        assert_eq!(fp.check(), Some(FaultKind::Error));
        assert_eq!(fp.check(), Some(FaultKind::Error));
        assert_eq!(fp.check(), None);
        assert_eq!(fp.triggered(), 2);
    }

    #[test]
    fn always_until_cleared() {
        let fp = FailPoint::new();
        fp.fail_always();
        for _ in 0..5 {
            assert!(fp.check().is_some());
        }
        fp.clear();
        assert_eq!(fp.check(), None);
    }
}
