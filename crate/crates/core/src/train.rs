//! Hooks shared by the trainers.

use crate::net::NetworkModel;

/// State after one parameter update.
pub struct StepSnapshot<'a> {
    /// Zero-based update counter across all epochs.
    pub step: usize,
    pub epoch: usize,
    /// Batch loss before the update.
    pub loss: f64,
    /// Parameters after the raw update, before projection onto the
    /// constraint set. Only present when the observer asked for it and the
    /// algorithm projects.
    pub pre_clip: Option<&'a NetworkModel>,
    pub model: &'a NetworkModel,
}

/// Receives every training step. Cloning the pre-projection model is costly,
/// so it is only produced for steps where [`StepObserver::wants_snapshot`]
/// returns `true`.
pub trait StepObserver {
    fn wants_snapshot(&mut self, _step: usize) -> bool {
        false
    }

    fn on_step(&mut self, snapshot: &StepSnapshot<'_>);
}

impl StepObserver for () {
    fn on_step(&mut self, _snapshot: &StepSnapshot<'_>) {}
}

impl<F: FnMut(&StepSnapshot<'_>)> StepObserver for F {
    fn on_step(&mut self, snapshot: &StepSnapshot<'_>) {
        self(snapshot)
    }
}
