use nalgebra::{Matrix3, Rotation3, Vector3};
use onh_geometry::Point;
use onh_phantom::{
    generate_displacement, generate_phantom, sample_cohort, CohortConfig, CouplingConfig, DisplacementField,
    PhantomParams, VolumeGrid,
};
use onh_strain::{
    displacement_gradient, effective_strain, green_lagrange, interior_lc_voxels, label, lc_average_effective_strain,
    lc_average_effective_strain_with, EffectiveStrain, Frobenius, Robustness, StrainError, StrainTensor,
    DEFAULT_THRESHOLD,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_grid(dims: [usize; 3], h: f64) -> VolumeGrid {
    VolumeGrid {
        dims,
        spacing_mm: [h, h * 0.7, h * 0.4],
    }
}

fn full_mask(g: &VolumeGrid) -> Vec<bool> {
    vec![true; g.len()]
}

fn affine(a: Matrix3<f64>, c: Vector3<f64>, g: VolumeGrid) -> DisplacementField {
    DisplacementField::from_fn(g, full_mask(&g), |p| {
        let u = a * p + c;
        [u.x, u.y, u.z]
    })
    .unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.random_range(-scale..scale))
}

#[test]
fn affine_fields_give_their_matrix_and_analytic_strain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = small_grid([6, 7, 8], 0.05);
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 0.1);
        let f = affine(a, Vector3::new(0.3, -0.2, 0.1), g);
        let e_true = 0.5 * (a + a.transpose() + a.transpose() * a);
        for voxel in [[1, 1, 1], [3, 4, 5], [4, 5, 6]] {
            let grad = displacement_gradient(&f, voxel).unwrap();
            assert!((grad - a).abs().max() < 1e-12);
            let e = green_lagrange(&grad).unwrap();
            assert!((e.matrix() - e_true).abs().max() < 1e-12);
        }
    }
}

#[test]
fn constant_field_has_zero_gradient() {
    let g = small_grid([4, 4, 4], 0.1);
    let f = DisplacementField::uniform(g, [0.2, -0.1, 0.05], full_mask(&g)).unwrap();
    assert_eq!(displacement_gradient(&f, [1, 2, 1]).unwrap(), Matrix3::zeros());
    assert_eq!(lc_average_effective_strain(&f).unwrap(), 0.0);
}

#[test]
fn border_voxels_are_rejected() {
    let g = small_grid([4, 4, 4], 0.1);
    let f = DisplacementField::uniform(g, [0.0; 3], full_mask(&g)).unwrap();
    assert!(matches!(
        displacement_gradient(&f, [0, 2, 2]),
        Err(StrainError::BorderVoxel { .. })
    ));
    assert!(displacement_gradient(&f, [1, 2, 3]).is_err());
}

#[test]
fn rigid_rotation_fields_carry_no_strain() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = small_grid([5, 5, 5], 0.1);
    for _ in 0..20 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-3.0..3.0));
        let f = affine(r.matrix() - Matrix3::identity(), Vector3::new(0.1, 0.2, 0.3), g);
        assert!(lc_average_effective_strain(&f).unwrap() <= 1e-12);
    }
}

/// Errors of the strain tensor at (0, 0, -0.1) for spacings 0.1/m.
fn refinement_errors(field: impl Fn(&Point) -> [f64; 3], grad: impl Fn(&Point) -> Matrix3<f64>) -> Vec<f64> {
    let at = Point::new(0.0, 0.0, -0.1);
    let e_true = green_lagrange(&grad(&at)).unwrap();
    [2usize, 4, 8]
        .iter()
        .map(|&m| {
            let h = 0.1 / m as f64;
            let g = VolumeGrid {
                dims: [3, 3, m + 2],
                spacing_mm: [h; 3],
            };
            assert!((g.position(1, 1, m) - at).norm() < 1e-15);
            let f = DisplacementField::from_fn(g, full_mask(&g), &field).unwrap();
            let e = green_lagrange(&displacement_gradient(&f, [1, 1, m]).unwrap()).unwrap();
            (e.matrix() - e_true.matrix()).abs().max()
        })
        .collect()
}

#[test]
fn quadratic_fields_are_differentiated_exactly() {
    let errs = refinement_errors(
        |p| [0.3 * p.x * p.x + 0.1 * p.y * p.z, 0.2 * p.z * p.z - 0.1 * p.x * p.y, 0.4 * p.x * p.z],
        |p| {
            Matrix3::new(
                0.6 * p.x, 0.1 * p.z, 0.1 * p.y,
                -0.1 * p.y, -0.1 * p.x, 0.4 * p.z,
                0.4 * p.z, 0.0, 0.4 * p.x,
            )
        },
    );
    assert!(errs.iter().all(|&e| e < 1e-14), "{errs:?}");
}

#[test]
fn cubic_fields_converge_at_second_order() {
    let errs = refinement_errors(
        |p| [p.x.powi(3) + 0.5 * p.z.powi(3), 0.7 * p.y.powi(3) - p.x * p.z * p.z, 0.3 * p.z.powi(3) + p.x.powi(2) * p.y],
        |p| {
            Matrix3::new(
                3.0 * p.x * p.x, 0.0, 1.5 * p.z * p.z,
                -p.z * p.z, 2.1 * p.y * p.y, -2.0 * p.x * p.z,
                2.0 * p.x * p.y, p.x * p.x, 0.9 * p.z * p.z,
            )
        },
    );
    let o1 = (errs[0] / errs[1]).log2();
    let o2 = (errs[1] / errs[2]).log2();
    assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2} from {errs:?}");
}

#[test]
fn translation_leaves_strain_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = small_grid([6, 6, 6], 0.05);
    // dyadic values: the shifted differences are computed without rounding
    let base: Vec<[f64; 3]> = (0..g.len())
        .map(|_| [0; 3].map(|_: i32| rng.random_range(-512i32..512) as f64 / 4096.0))
        .collect();
    let shift = [0.125, -0.0625, 0.25];
    let moved: Vec<[f64; 3]> = base.iter().map(|u| [u[0] + shift[0], u[1] + shift[1], u[2] + shift[2]]).collect();
    let a = DisplacementField::new(g, base, full_mask(&g), [0.0; 3]).unwrap();
    let b = DisplacementField::new(g, moved, full_mask(&g), shift).unwrap();
    for i in 1..5 {
        for j in 1..5 {
            for k in 1..5 {
                let ea = green_lagrange(&displacement_gradient(&a, [i, j, k]).unwrap()).unwrap();
                let eb = green_lagrange(&displacement_gradient(&b, [i, j, k]).unwrap()).unwrap();
                assert_eq!(ea, eb);
            }
        }
    }
}

/// Straight loop over the whole grid: 6-neighbour erosion, central
/// differences, Green–Lagrange and von Mises written out by hand.
fn oracle_mean(f: &DisplacementField) -> f64 {
    let [n0, n1, n2] = f.grid.dims;
    let h = [f.grid.spacing_mm[0], f.grid.spacing_mm[1], -f.grid.spacing_mm[2]];
    let at = |i: usize, j: usize, k: usize| f.u[(i * n1 + j) * n2 + k];
    let m = |i: usize, j: usize, k: usize| f.lc_mask[(i * n1 + j) * n2 + k];
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            for k in 1..n2 - 1 {
                if !(m(i, j, k) && m(i - 1, j, k) && m(i + 1, j, k) && m(i, j - 1, k) && m(i, j + 1, k) && m(i, j, k - 1) && m(i, j, k + 1)) {
                    continue;
                }
                let mut gu = [[0.0; 3]; 3];
                let nb = [
                    (at(i + 1, j, k), at(i - 1, j, k)),
                    (at(i, j + 1, k), at(i, j - 1, k)),
                    (at(i, j, k + 1), at(i, j, k - 1)),
                ];
                for b in 0..3 {
                    for a in 0..3 {
                        gu[a][b] = (nb[b].0[a] - nb[b].1[a]) / (2.0 * h[b]);
                    }
                }
                let mut e = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        let mut s = gu[a][b] + gu[b][a];
                        for c in 0..3 {
                            s += gu[c][a] * gu[c][b];
                        }
                        e[a][b] = 0.5 * s;
                    }
                }
                let tr = (e[0][0] + e[1][1] + e[2][2]) / 3.0;
                let mut dd = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        let d = e[a][b] - if a == b { tr } else { 0.0 };
                        dd += d * d;
                    }
                }
                sum += (2.0 / 3.0 * dd).sqrt();
                count += 1;
            }
        }
    }
    sum / count as f64
}

#[test]
fn lc_average_matches_a_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let g = small_grid([rng.random_range(4..9), rng.random_range(4..9), rng.random_range(4..9)], 0.05);
        let u = (0..g.len()).map(|_| [0; 3].map(|_: i32| rng.random_range(-0.01..0.01))).collect();
        let mask = (0..g.len()).map(|_| rng.random_bool(0.85)).collect();
        let f = DisplacementField::new(g, u, mask, [0.0; 3]).unwrap();
        if interior_lc_voxels(&f).is_empty() {
            continue;
        }
        let got = lc_average_effective_strain(&f).unwrap();
        assert!((got - oracle_mean(&f)).abs() <= 1e-12);
    }
}

/// `diag(a, b, b)` whose Green–Lagrange strain is `diag(ε, -ε/2, -ε/2)`.
fn uniaxial_stretch(eps: f64) -> Matrix3<f64> {
    let root = |t: f64| -1.0 + (1.0 + 2.0 * t).sqrt();
    Matrix3::from_diagonal(&Vector3::new(root(eps), root(-eps / 2.0), root(-eps / 2.0)))
}

#[test]
fn uniform_strain_over_the_mask_averages_to_itself() {
    let g = small_grid([8, 8, 8], 0.05);
    let mask: Vec<bool> = (0..g.len()).map(|i| g.coords(i)[0] >= 2).collect();
    let mut f = affine(uniaxial_stretch(0.03), Vector3::zeros(), g);
    f.lc_mask = mask;
    assert!((lc_average_effective_strain(&f).unwrap() - 0.03).abs() < 1e-12);
}

#[test]
fn two_halves_average_to_the_midpoint() {
    let g = small_grid([21, 6, 6], 0.05);
    let (ea, eb) = (0.02, 0.06);
    let (aa, ab) = (uniaxial_stretch(ea), uniaxial_stretch(eb));
    // piecewise affine in x with the kink far from both blobs
    let f = DisplacementField::from_fn(g, vec![false; g.len()], |p| {
        let u = if p.x < 0.0 { aa * p } else { ab * p };
        [u.x, u.y, u.z]
    })
    .unwrap();
    let mask = (0..g.len())
        .map(|i| {
            let [x, _, _] = g.coords(i);
            (1..=6).contains(&x) || (14..=19).contains(&x)
        })
        .collect();
    let f = DisplacementField { lc_mask: mask, ..f };
    let got = lc_average_effective_strain(&f).unwrap();
    assert!((got - 0.5 * (ea + eb)).abs() < 1e-12, "{got}");
}

#[test]
fn empty_eroded_mask_fails() {
    let g = small_grid([5, 5, 5], 0.05);
    let mut mask = vec![false; g.len()];
    mask[g.index(2, 2, 2)] = true;
    let f = DisplacementField::uniform(g, [0.0; 3], mask).unwrap();
    assert_eq!(lc_average_effective_strain(&f), Err(StrainError::EmptyMask));
}

#[test]
fn frobenius_strategy_plugs_in() {
    let g = small_grid([5, 5, 5], 0.05);
    let f = affine(Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.01)), Vector3::zeros(), g);
    let fro = lc_average_effective_strain_with(&f, &Frobenius).unwrap();
    let e = 0.01 + 0.5e-4;
    assert!((fro - (3.0f64).sqrt() * e).abs() < 1e-12);
    assert!(lc_average_effective_strain(&f).unwrap() < 1e-12);
    assert_eq!(Frobenius.name(), "frobenius");
}

#[test]
fn load_calibration_and_zero_load() {
    let mut p = PhantomParams {
        grid: VolumeGrid::desk(),
        fragility: 1.0,
        ..Default::default()
    };
    let (v, _) = generate_phantom(&p, 0).unwrap();
    let c = CouplingConfig::default();
    let e1 = lc_average_effective_strain(&generate_displacement(&v, &p, &c, 0).unwrap()).unwrap();
    assert!(e1 > DEFAULT_THRESHOLD);
    assert!((e1 - 0.08).abs() < 0.08 * 0.01, "{e1}");

    p.fragility = 0.0;
    let e0 = lc_average_effective_strain(&generate_displacement(&v, &p, &c, 0).unwrap()).unwrap();
    assert!(e0 < 1e-12);
    assert_eq!(label(e0, DEFAULT_THRESHOLD).unwrap().label, Robustness::Robust);
}

#[test]
fn cohort_labels_are_balanced() {
    let cfg = CohortConfig {
        n: 200,
        target_fragile_fraction: 0.5,
        seed: 2024,
        ..Default::default()
    };
    let mut fragile = 0;
    for e in sample_cohort(&cfg).unwrap() {
        let m = onh_phantom::generate_member(&e, &cfg.coupling).unwrap();
        let l = label(lc_average_effective_strain(&m.field).unwrap(), DEFAULT_THRESHOLD).unwrap();
        fragile += (l.label == Robustness::Fragile) as usize;
    }
    assert!((80..=120).contains(&fragile), "{fragile} fragile of 200");
}

fn random_symmetric(vals: [f64; 6]) -> StrainTensor {
    let [a, b, c, d, e, f] = vals;
    StrainTensor::new(Matrix3::new(a, d, e, d, b, f, e, f, c)).unwrap()
}

proptest! {
    #[test]
    fn effective_strain_is_rotation_invariant(vals in prop::array::uniform6(-0.2f64..0.2), axis in prop::array::uniform3(-1.0f64..1.0), angle in -3.1f64..3.1) {
        prop_assume!(Vector3::from(axis).norm() > 1e-3);
        let e = random_symmetric(vals);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
        let m = r.matrix().transpose() * e.matrix() * r.matrix();
        let rotated = StrainTensor::new(0.5 * (m + m.transpose())).unwrap();
        prop_assert!((effective_strain(&e) - effective_strain(&rotated)).abs() <= 1e-12);
    }

    #[test]
    fn effective_strain_vanishes_only_without_deviator(vals in prop::array::uniform6(-0.2f64..0.2), lambda in -0.1f64..0.1) {
        let e = random_symmetric(vals);
        let v = effective_strain(&e);
        prop_assert!(v >= 0.0);
        let dev = e.deviator();
        prop_assert_eq!(v == 0.0, dev.iter().all(|x| *x == 0.0));
        let iso = StrainTensor::new(Matrix3::identity() * lambda).unwrap();
        prop_assert!(effective_strain(&iso) < 1e-15);
    }

    #[test]
    fn labels_are_monotone(a in 0.0f64..0.2, b in 0.0f64..0.2) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let l_lo = label(lo, DEFAULT_THRESHOLD).unwrap().label;
        let l_hi = label(hi, DEFAULT_THRESHOLD).unwrap().label;
        prop_assert!(!(l_lo == Robustness::Fragile && l_hi == Robustness::Robust));
    }
}
