//! Shared fixtures for the criterion benchmarks: the default synthetic
//! anatomy, synthetic digit targets and an initialized layout.

use cortiplan_core::anatomy::synth_anatomy;
use cortiplan_core::dataset::synth_digits;
use cortiplan_core::optimize::init_layout;
use cortiplan_core::{AnatomyModel, ElectrodeLayout, SynthParams, TargetImage, Vec3};

pub struct Fixture {
    pub anatomy: AnatomyModel,
    pub targets: Vec<TargetImage>,
    pub layout: ElectrodeLayout,
}

/// Default anatomy, `targets` digits at ±5°, and `electrodes` points drawn
/// from gray matter with seed 0.
pub fn fixture(electrodes: usize, targets: usize) -> Fixture {
    let anatomy = synth_anatomy(&SynthParams::default(), 0).expect("synthetic anatomy");
    let targets = synth_digits(targets, 1, 5.0).expect("digits");
    let layout = init_layout(&anatomy, electrodes, 0).expect("layout");
    Fixture { anatomy, targets, layout }
}

/// Deterministic query points: every `stride`-th site shifted by a fixed
/// sub-millimeter offset so queries do not coincide with sites.
pub fn query_points(anatomy: &AnatomyModel, stride: usize) -> Vec<Vec3> {
    anatomy
        .sites()
        .iter()
        .step_by(stride.max(1))
        .map(|s| {
            let c = s.cortical_pos;
            [c[0] + 0.13, c[1] - 0.07, c[2] + 0.05]
        })
        .collect()
}
