use nalgebra::Rotation3;
use onh_geometry::io::{read_cloud_csv, write_cloud_csv};
use onh_geometry::{
    augment, canonicalize, fit_bmo_plane, knn, local_thickness, sample_point_cloud, AugmentationConfig, BoundaryRole,
    BoundarySurface, OnhPointCloud, Point, RigidTransform, Tissue,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn brute_knn(points: &[f64], dim: usize, q: usize, k: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let mut all: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != q)
        .map(|j| {
            let mut s = 0.0;
            for c in 0..dim {
                let d = points[q * dim + c] - points[j * dim + c];
                s += d * d;
            }
            (s, j)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all[..k].iter().map(|x| x.1).collect()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> OnhPointCloud {
    let positions: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..0.5)))
        .collect();
    let thickness = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
    OnhPointCloud::new(positions, thickness, vec![Tissue::Lc; n], false).unwrap()
}

/// Scan tilt: rotation about x then y, plus a translation. These never spin
/// the cloud about the BMO normal, which the in-plane convention pins to the
/// scan x-axis.
fn random_tilt(rng: &mut ChaCha8Rng) -> RigidTransform {
    let a = rng.random_range(-0.5..0.5);
    let b = rng.random_range(-0.5..0.5);
    let rot = Rotation3::from_axis_angle(&Point::x_axis(), a) * Rotation3::from_axis_angle(&Point::y_axis(), b);
    RigidTransform {
        rotation: *rot.matrix(),
        translation: Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
    }
}

fn bmo_ring(rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..48)
        .map(|i| {
            let t = i as f64 / 48.0 * std::f64::consts::TAU;
            Point::new(0.9 * t.cos(), 0.8 * t.sin(), rng.random_range(-0.02..0.02))
        })
        .collect()
}

#[test]
fn noisy_plane_normal_within_half_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1e-3).unwrap();
    for _ in 0..20 {
        let n = Point::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0).normalize();
        let u = n.cross(&Point::x()).normalize();
        let v = n.cross(&u);
        let pts: Vec<Point> = (0..48)
            .map(|_| {
                let (s, t) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                u * s + v * t + n * noise.sample(&mut rng)
            })
            .collect();
        let plane = fit_bmo_plane(&pts).unwrap();
        let angle = plane.normal.dot(&n).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 0.5, "angle {angle}");
    }
}

#[test]
fn canonicalizing_a_canonical_cloud_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cloud = random_cloud(&mut rng, 50);
    let ring: Vec<Point> = (0..24)
        .map(|i| {
            let t = i as f64 / 24.0 * std::f64::consts::TAU;
            Point::new(t.cos(), t.sin(), 0.0)
        })
        .collect();
    let plane = fit_bmo_plane(&ring).unwrap();
    let out = canonicalize(&cloud, &plane);
    for (a, b) in cloud.positions.iter().zip(&out.positions) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn tilted_cloud_round_trips_to_the_canonical_original() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..25 {
        let ring = bmo_ring(&mut rng);
        let raw = random_cloud(&mut rng, 80);
        let plane = fit_bmo_plane(&ring).unwrap();
        let canonical = canonicalize(&raw, &plane);
        let canon_ring: Vec<Point> = ring.iter().map(|p| onh_geometry::canonical_transform(&plane).apply(p)).collect();

        let t = random_tilt(&mut rng);
        let moved_ring: Vec<Point> = canon_ring.iter().map(|p| t.apply(p)).collect();
        let mut moved = canonical.clone();
        moved.positions = canonical.positions.iter().map(|p| t.apply(p)).collect();
        let again = canonicalize(&moved, &fit_bmo_plane(&moved_ring).unwrap());
        for (a, b) in canonical.positions.iter().zip(&again.positions) {
            assert!((a - b).norm() < 1e-9, "{}", (a - b).norm());
        }
        // pairwise distances survive
        for i in (0..80).step_by(7) {
            for j in (0..80).step_by(5) {
                let d0 = (raw.positions[i] - raw.positions[j]).norm();
                let d1 = (canonical.positions[i] - canonical.positions[j]).norm();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
        assert!(again.canonical);
    }
}

#[test]
fn canonical_frame_puts_bmo_at_origin_with_normal_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ring = bmo_ring(&mut rng);
    let t = random_tilt(&mut rng);
    let moved: Vec<Point> = ring.iter().map(|p| t.apply(p)).collect();
    let plane = fit_bmo_plane(&moved).unwrap();
    let ct = onh_geometry::canonical_transform(&plane);
    let in_frame: Vec<Point> = moved.iter().map(|p| ct.apply(p)).collect();
    let refit = fit_bmo_plane(&in_frame).unwrap();
    assert!(refit.centroid.norm() < 1e-9);
    assert!((refit.normal - Point::z()).norm() < 1e-9);
}

#[test]
fn knn_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..40 {
        let dim = 1 + trial % 5;
        let n = rng.random_range(5..60);
        let lattice = trial % 2 == 0;
        let pts: Vec<f64> = (0..n * dim)
            .map(|_| if lattice { rng.random_range(0..4) as f64 } else { rng.random_range(-1.0..1.0) })
            .collect();
        for _ in 0..10 {
            let q = rng.random_range(0..n);
            let k = rng.random_range(1..n);
            assert_eq!(knn(&pts, dim, q, k).unwrap(), brute_knn(&pts, dim, q, k));
        }
    }
}

proptest! {
    #[test]
    fn knn_is_permutation_covariant(seed in 0u64..1000, n in 6usize..40, k_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // new row r holds old point perm[r]
        let mut permuted = vec![0.0; n * 3];
        for (r, &old) in perm.iter().enumerate() {
            permuted[r * 3..r * 3 + 3].copy_from_slice(&pts[old * 3..old * 3 + 3]);
        }
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let q_new = rng.random_range(0..n);
        let got: Vec<usize> = knn(&permuted, 3, q_new, k).unwrap().into_iter().map(|r| perm[r]).collect();
        let expected = knn(&pts, 3, perm[q_new], k).unwrap();
        prop_assert_eq!(got, expected);
    }
}

fn plane_surface(tissue: Tissue, role: BoundaryRole, z: f64, step: f64) -> BoundarySurface {
    let mut pts = Vec::new();
    let m = (1.0 / step) as i64;
    for i in -m..=m {
        for j in -m..=m {
            pts.push(Point::new(i as f64 * step, j as f64 * step, z));
        }
    }
    BoundarySurface::new(tissue, role, pts).unwrap()
}

#[test]
fn parallel_planes_give_their_separation_either_way_round() {
    let a = plane_surface(Tissue::Sclera, BoundaryRole::Anterior, 0.0, 0.02);
    let b = plane_surface(Tissue::Sclera, BoundaryRole::Posterior, -0.1, 0.02);
    let t = local_thickness(&a, &b).unwrap();
    assert!(t.iter().all(|&x| (x - 0.1).abs() < 1e-12));
    let swapped = local_thickness(
        &BoundarySurface { role: BoundaryRole::Anterior, ..b.clone() },
        &BoundarySurface { role: BoundaryRole::Posterior, ..a.clone() },
    )
    .unwrap();
    assert_eq!(t, swapped);
}

#[test]
fn concentric_spheres_give_radius_gap() {
    let sphere = |r: f64, n: usize| -> Vec<Point> {
        // Fibonacci lattice
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rad = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Point::new(rad * th.cos(), y, rad * th.sin()) * r
            })
            .collect()
    };
    let inner = BoundarySurface::new(Tissue::Lc, BoundaryRole::Anterior, sphere(1.0, 400)).unwrap();
    let outer = BoundarySurface::new(Tissue::Lc, BoundaryRole::Posterior, sphere(1.2, 20000)).unwrap();
    let t = local_thickness(&inner, &outer).unwrap();
    for x in t {
        assert!((x - 0.2).abs() < 2e-3, "{x}");
    }
}

#[test]
fn thickness_matches_pairwise_minimum_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mk = |rng: &mut ChaCha8Rng, n: usize, role| {
            let pts = (0..n)
                .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3)))
                .collect();
            BoundarySurface::new(Tissue::Sclera, role, pts).unwrap()
        };
        let a = mk(&mut rng, 200, BoundaryRole::Anterior);
        let b = mk(&mut rng, 300, BoundaryRole::Posterior);
        let t = local_thickness(&a, &b).unwrap();
        for (p, got) in a.points.iter().zip(&t) {
            let oracle = b.points.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(*got, oracle);
        }
    }
}

#[test]
fn thickness_requires_matching_tissue() {
    let a = plane_surface(Tissue::Sclera, BoundaryRole::Anterior, 0.0, 0.5);
    let b = plane_surface(Tissue::Lc, BoundaryRole::Posterior, -0.1, 0.5);
    assert!(local_thickness(&a, &b).is_err());
}

fn two_tissues() -> Vec<BoundarySurface> {
    vec![
        plane_surface(Tissue::Sclera, BoundaryRole::Anterior, 0.0, 0.1),
        plane_surface(Tissue::Sclera, BoundaryRole::Posterior, -0.3, 0.1),
        plane_surface(Tissue::RnflPlt, BoundaryRole::Anterior, 0.4, 0.1),
    ]
}

#[test]
fn sampling_everything_returns_each_point_once() {
    let b = two_tissues();
    let total: usize = b.iter().map(|s| s.points.len()).sum();
    let cloud = sample_point_cloud(&b, total + 100, 1).unwrap();
    assert_eq!(cloud.len(), total);
    let mut expected: Vec<Point> = b.iter().flat_map(|s| s.points.clone()).collect();
    let mut got = cloud.positions.clone();
    let key = |p: &Point| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
    expected.sort_by_key(key);
    got.sort_by_key(key);
    assert_eq!(expected, got);
    for ((t, tissue), p) in cloud.thickness.iter().zip(&cloud.tissue).zip(&cloud.positions) {
        match (tissue, p.z) {
            (Tissue::Sclera, z) if z == 0.0 => assert!((t - 0.3).abs() < 1e-12),
            _ => assert_eq!(*t, 0.0),
        }
    }
}

#[test]
fn sampling_is_seeded() {
    let b = two_tissues();
    let a1 = sample_point_cloud(&b, 100, 9).unwrap();
    let a2 = sample_point_cloud(&b, 100, 9).unwrap();
    let a3 = sample_point_cloud(&b, 100, 10).unwrap();
    assert_eq!(a1, a2);
    assert_ne!(a1.positions, a3.positions);
    assert_eq!(a1.len(), 100);
    assert!(sample_point_cloud(&[], 10, 0).is_err());
}

fn pairwise(cloud: &OnhPointCloud) -> Vec<f64> {
    let mut d = Vec::new();
    for i in 0..cloud.len() {
        for j in i + 1..cloud.len() {
            d.push((cloud.positions[i] - cloud.positions[j]).norm());
        }
    }
    d
}

#[test]
fn augmentation_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = random_cloud(&mut rng, 120);

    let off = AugmentationConfig { seed: 3, ..Default::default() };
    assert_eq!(augment(&cloud, &off).unwrap(), cloud);

    let rot = AugmentationConfig { rotate: true, rotation_deg: 180.0, seed: 3, ..Default::default() };
    let r = augment(&cloud, &rot).unwrap();
    assert_ne!(r.positions, cloud.positions);
    for (a, b) in pairwise(&cloud).iter().zip(pairwise(&r)) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(r.thickness, cloud.thickness);

    let sub = AugmentationConfig { subsample: true, subsample_count: 30, seed: 3, ..Default::default() };
    let s = augment(&cloud, &sub).unwrap();
    assert_eq!(s.len(), 30);
    assert!(s.positions.iter().all(|p| cloud.positions.contains(p)));
    let clamp = AugmentationConfig { subsample: true, subsample_count: 1000, seed: 3, ..Default::default() };
    assert_eq!(augment(&cloud, &clamp).unwrap().len(), 120);

    let crop = AugmentationConfig { crop: true, crop_fraction: 0.5, seed: 3, ..Default::default() };
    let c = augment(&cloud, &crop).unwrap();
    assert!(c.len() < cloud.len() && !c.is_empty());

    let noise = AugmentationConfig { noise: true, noise_sigma_mm: 0.01, translate: true, translation_mm: 0.1, seed: 3, ..Default::default() };
    let n = augment(&cloud, &noise).unwrap();
    assert_eq!(n.thickness, cloud.thickness);
    assert_eq!(n.len(), cloud.len());

    let bad = AugmentationConfig { crop_fraction: 0.0, ..Default::default() };
    assert!(augment(&cloud, &bad).is_err());
}

#[test]
fn csv_round_trip_is_lossless() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cloud = random_cloud(&mut rng, 40);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.csv");
    write_cloud_csv(&path, &cloud).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x_mm,y_mm,z_mm,thickness_mm,tissue_id\n"));
    let back = read_cloud_csv(&path).unwrap();
    assert_eq!(back, cloud);
}
