mod common;

use common::*;
use cortiplan_core::anatomy::{synth_anatomy, AnatomyModel, RetinotopySite, SynthParams};
use cortiplan_core::baselines::{coverage_layout, coverage_loss, softmin, tiling_layout, tiling_points};
use cortiplan_core::eval::evaluate_layout;
use cortiplan_core::forward::map_to_visual_field;
use cortiplan_core::{ElectrodeLayout, ObjectiveConfig, TargetImage};
use rand::seq::SliceRandom;

fn dense_anatomy() -> AnatomyModel {
    synth_anatomy(
        &SynthParams { visual_extent: [3.0, 3.0], sites: 3000, voxel_mm: 0.4, vessels: 0, ..Default::default() },
        0,
    )
    .unwrap()
}

fn brute_nearest(sites: &[RetinotopySite], v: [f64; 2]) -> &RetinotopySite {
    let d = |s: &RetinotopySite| (s.visual_pos[0] - v[0]).powi(2) + (s.visual_pos[1] - v[1]).powi(2);
    sites.iter().min_by(|a, b| d(a).total_cmp(&d(b)).then(a.id.cmp(&b.id))).unwrap()
}

#[test]
fn tiling_snaps_to_visually_nearest_sites() {
    let anatomy = small_anatomy(0);
    for n in [1, 4, 7, 16, 30] {
        let layout = tiling_layout(&anatomy, n).unwrap();
        let pts = tiling_points(n, anatomy.visual_extent());
        let got = layout.positions().unwrap();
        assert_eq!(got.len(), n);
        for (p, v) in got.iter().zip(&pts) {
            assert_eq!(*p, brute_nearest(anatomy.sites(), *v).cortical_pos);
        }
    }
    assert!(tiling_layout(&anatomy, 0).is_err());
}

#[test]
fn tiling_small_grids() {
    let anatomy = small_anatomy(1);
    let one = tiling_layout(&anatomy, 1).unwrap().positions().unwrap();
    assert_eq!(one[0], brute_nearest(anatomy.sites(), [0.0, 0.0]).cortical_pos);
    let mut four = tiling_points(4, [2.0, 2.0]);
    four.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(four, vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]);
}

#[test]
fn tiling_ignores_site_order() {
    let anatomy = small_anatomy(2);
    let mut sites = anatomy.sites().to_vec();
    sites.shuffle(&mut rng(3));
    let shuffled =
        AnatomyModel::new(sites, anatomy.gm_sdf().clone(), anatomy.vessels().clone(), anatomy.visual_extent()).unwrap();
    for n in [1, 9, 25] {
        assert_eq!(tiling_layout(&anatomy, n).unwrap(), tiling_layout(&shuffled, n).unwrap());
    }
}

fn uniform(w: usize, extent: f64) -> TargetImage {
    TargetImage::new(w, w, [extent, extent], vec![1.0; w * w]).unwrap()
}

fn coverage_config() -> ObjectiveConfig {
    ObjectiveConfig {
        lambda_vasc: 0.0,
        lambda_cortex: 0.0,
        lr: 0.02,
        max_iters: 1500,
        seed: 1,
        ..ObjectiveConfig::default()
    }
}

fn visual_positions(anatomy: &AnatomyModel, layout: &ElectrodeLayout, k: usize) -> Vec<[f64; 2]> {
    layout.positions().unwrap().into_iter().map(|p| map_to_visual_field(anatomy, p, k).unwrap().s).collect()
}

#[test]
fn single_electrode_covers_centroid_of_uniform_mass() {
    let anatomy = dense_anatomy();
    let target = uniform(24, 2.0);
    let config = coverage_config();
    // Grid search on the coverage loss itself.
    let mut best = ([0.0; 2], f64::INFINITY);
    for i in 0..=200 {
        for j in 0..=200 {
            let s = [-2.0 + 0.02 * i as f64, -2.0 + 0.02 * j as f64];
            let l = coverage_loss(&[s], target.raster(), config.coverage_temperature).0;
            if l < best.1 {
                best = (s, l);
            }
        }
    }
    let (layout, _) = coverage_layout(&anatomy, &[target], 1, &config).unwrap();
    let s = visual_positions(&anatomy, &layout, config.knn_k)[0];
    assert!((s[0] - best.0[0]).hypot(s[1] - best.0[1]) < 0.1, "{s:?} vs {:?}", best.0);
}

/// The `x >= 0` hemifield sheet alone. Electrodes on the other sheet can
/// never reach a right-hand quadrant, so it is marked outside gray matter.
fn right_sheet(anatomy: &AnatomyModel) -> AnatomyModel {
    let sites: Vec<RetinotopySite> = anatomy.sites().iter().filter(|s| s.visual_pos[0] >= 0.0).cloned().collect();
    let mut sdf = anatomy.gm_sdf().clone();
    let [nx, ny, _] = sdf.dims;
    for (idx, v) in sdf.values.iter_mut().enumerate() {
        let j = (idx / nx) % ny;
        if sdf.origin[1] + j as f64 * sdf.spacing[1] < 0.0 {
            *v = v.max(1.0);
        }
    }
    AnatomyModel::new(sites, sdf, anatomy.vessels().clone(), anatomy.visual_extent()).unwrap()
}

#[test]
fn quadrant_mass_pulls_every_electrode_into_the_quadrant() {
    let anatomy = right_sheet(&dense_anatomy());
    let w = 24;
    let mut values = vec![0.0; w * w];
    for i in 0..w / 2 {
        for j in w / 2..w {
            values[i * w + j] = 1.0;
        }
    }
    // Top-right quadrant: x > 0, y > 0.
    let target = TargetImage::new(w, w, [3.0, 3.0], values).unwrap();
    let config = coverage_config();
    let (layout, _) = coverage_layout(&anatomy, &[target], 4, &config).unwrap();
    for s in visual_positions(&anatomy, &layout, config.knn_k) {
        assert!(s[0] > 0.0 && s[1] > 0.0, "{s:?}");
    }
}

#[test]
fn uniform_coverage_keeps_electrodes_apart() {
    let anatomy = dense_anatomy();
    let config = coverage_config();
    let (layout, _) = coverage_layout(&anatomy, &[uniform(24, 3.0)], 8, &config).unwrap();
    let s = visual_positions(&anatomy, &layout, config.knn_k);
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            assert!((s[i][0] - s[j][0]).hypot(s[i][1] - s[j][1]) > 1e-3);
        }
    }
    let (again, _) = coverage_layout(&anatomy, &[uniform(24, 3.0)], 8, &config).unwrap();
    assert_eq!(layout, again);
}

#[test]
fn baselines_are_evaluable() {
    let anatomy = small_anatomy(4);
    let data = cortiplan_core::dataset::synth_digits(4, 0, 3.0).unwrap();
    let config = ObjectiveConfig { max_iters: 30, ..ObjectiveConfig::default() };
    let tiling = tiling_layout(&anatomy, 9).unwrap();
    let (coverage, _) = coverage_layout(&anatomy, &data, 9, &config).unwrap();
    for layout in [tiling, coverage] {
        let r = evaluate_layout(&anatomy, &layout, &data, &config).unwrap();
        assert_eq!(r.mse.len(), 4);
        assert_eq!(r.electrodes, 9);
    }
}

#[test]
fn softmin_approaches_hard_min() {
    let mut r = rng(5);
    for _ in 0..50 {
        let d: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut r, 0.5..20.0)).collect();
        let hard = d.iter().copied().fold(f64::INFINITY, f64::min);
        let (s, _) = softmin(&d, 1e-3);
        assert!((s - hard).abs() <= 0.01 * hard);
    }
}
