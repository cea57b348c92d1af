//! Desk-scale comparisons on the synthetic anatomy and synthetic digits:
//! percept-aware placement against tiling, the vascular constraint, and
//! threads against free electrodes.

use std::time::Instant;

use cortiplan_core::anatomy::synth_anatomy;
use cortiplan_core::baselines::tiling_layout;
use cortiplan_core::dataset::synth_digits;
use cortiplan_core::eval::{evaluate_layout, wilcoxon_signed_rank};
use cortiplan_core::optimize::{optimize_placement, optimize_threads};
use cortiplan_core::{
    AnatomyModel, ElectrodeLayout, EvaluationReport, ObjectiveConfig, SpreadModel, SynthParams, TargetImage,
};

use crate::Outcome;

const SEEDS: [u64; 3] = [0, 1, 2];
const EXTENT_DEG: f64 = 5.0;

pub struct Desk {
    anatomy: AnatomyModel,
    train: Vec<TargetImage>,
    test: Vec<TargetImage>,
    setup_secs: f64,
    tiling: Option<(EvaluationReport, f64)>,
    unconstrained: Option<(Vec<EvaluationReport>, f64)>,
}

fn config(lambda_vasc: f64, seed: u64) -> ObjectiveConfig {
    ObjectiveConfig { lambda_vasc, seed, spread: SpreadModel::cortical_um(1000.0), ..ObjectiveConfig::default() }
}

impl Desk {
    pub fn new() -> Self {
        let start = Instant::now();
        let anatomy = synth_anatomy(&SynthParams::default(), 0).expect("synthetic anatomy");
        let train = synth_digits(200, 1, EXTENT_DEG).expect("train digits");
        let test = synth_digits(100, 2, EXTENT_DEG).expect("test digits");
        Self { anatomy, train, test, setup_secs: start.elapsed().as_secs_f64(), tiling: None, unconstrained: None }
    }

    fn evaluate(&self, layout: &ElectrodeLayout, cfg: &ObjectiveConfig) -> EvaluationReport {
        evaluate_layout(&self.anatomy, layout, &self.test, cfg).expect("evaluation")
    }

    fn tiling(&mut self) -> (EvaluationReport, f64) {
        if self.tiling.is_none() {
            let start = Instant::now();
            let layout = tiling_layout(&self.anatomy, 64).expect("tiling");
            let report = self.evaluate(&layout, &config(0.0, 0));
            self.tiling = Some((report, start.elapsed().as_secs_f64()));
        }
        self.tiling.clone().expect("set above")
    }

    fn percept_runs(&self, n: usize, lambda_vasc: f64) -> (Vec<EvaluationReport>, f64) {
        let start = Instant::now();
        let reports = SEEDS
            .iter()
            .map(|&seed| {
                let cfg = config(lambda_vasc, seed);
                let (layout, _) = optimize_placement(&self.anatomy, &self.train, n, &cfg).expect("optimization");
                self.evaluate(&layout, &cfg)
            })
            .collect();
        (reports, start.elapsed().as_secs_f64())
    }

    fn unconstrained(&mut self) -> (Vec<EvaluationReport>, f64) {
        if self.unconstrained.is_none() {
            self.unconstrained = Some(self.percept_runs(64, 0.0));
        }
        self.unconstrained.clone().expect("set above")
    }

    pub fn versus_tiling(&mut self) -> Outcome {
        let (tiling, tiling_secs) = self.tiling();
        let (runs, run_secs) = self.unconstrained();
        let secs = self.setup_secs + tiling_secs + run_secs;
        let mut details = vec![format!(
            "tiling N=64: median MSE {:.4}, median SSIM {:.4}",
            tiling.mse_summary.median, tiling.ssim_summary.median
        )];
        let mut pass = secs < 600.0;
        for r in &runs {
            let ratio = r.mse_summary.median / tiling.mse_summary.median;
            let p_mse = wilcoxon_signed_rank(&r.mse, &tiling.mse).expect("wilcoxon").p_value;
            let p_ssim = wilcoxon_signed_rank(&r.ssim, &tiling.ssim).expect("wilcoxon").p_value;
            let ok =
                ratio <= 0.6 && r.ssim_summary.median > tiling.ssim_summary.median && p_mse <= 0.01 && p_ssim <= 0.01;
            pass &= ok;
            details.push(format!(
                "seed {}: median MSE {:.4} ({ratio:.3}× tiling, limit 0.6), median SSIM {:.4}, Wilcoxon p MSE {p_mse:.1e} SSIM {p_ssim:.1e} {}",
                r.seed,
                r.mse_summary.median,
                r.ssim_summary.median,
                if ok { "ok" } else { "not met" }
            ));
        }
        Outcome {
            pass,
            summary: format!("percept-aware vs tiling, N=64, rho=1000 um, 3 seeds; {secs:.0} s total (limit 600 s)"),
            details,
        }
    }

    pub fn vascular_safety(&mut self) -> Outcome {
        let (free, _) = self.unconstrained();
        let (safe, _) = self.percept_runs(64, 10.0);
        let mut pass = true;
        let mut details = Vec::new();
        for (u, c) in free.iter().zip(&safe) {
            let drop = (u.ssim_summary.median - c.ssim_summary.median) / u.ssim_summary.median;
            let ok = c.violations == 0 && drop <= 0.10;
            pass &= ok;
            details.push(format!(
                "seed {}: violations {} -> {}, median SSIM {:.4} -> {:.4} ({:+.1}% change, degradation limit 10%) {}",
                c.seed,
                u.violations,
                c.violations,
                u.ssim_summary.median,
                c.ssim_summary.median,
                -100.0 * drop,
                if ok { "ok" } else { "not met" }
            ));
        }
        Outcome {
            pass,
            summary: "vascular hinge lambda_vasc=10, tau=0.3 mm: zero violations and SSIM kept".into(),
            details,
        }
    }

    pub fn threads(&mut self) -> Outcome {
        let (free, _) = self.percept_runs(32, 0.0);
        let mut wins = 0;
        let mut details = Vec::new();
        for (f, &seed) in free.iter().zip(&SEEDS) {
            let cfg = config(0.0, seed);
            let (layout, _) =
                optimize_threads(&self.anatomy, &self.train, &cfg, 32, 4, 0.2).expect("thread optimization");
            let t = self.evaluate(&layout, &cfg);
            let win = t.ssim_summary.median >= f.ssim_summary.median;
            wins += usize::from(win);
            details.push(format!(
                "seed {seed}: threads 32x4 median SSIM {:.4} vs free N=32 {:.4} {}",
                t.ssim_summary.median,
                f.ssim_summary.median,
                if win { "threads ahead" } else { "free ahead" }
            ));
        }
        Outcome {
            pass: wins >= 2,
            summary: format!("threads 32x4 at 0.2 mm vs free N=32: threads ahead on {wins}/3 seeds (need 2)"),
            details,
        }
    }
}
