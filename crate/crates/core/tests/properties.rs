use approx::assert_relative_eq;
use ndarray::Array2;
use proptest::prelude::*;
use scatterkit::dataset::{rasterize, sample_scene, scale_to_max};
use scatterkit::field::frobenius;
use scatterkit::forward::{add_noise, born_far_field};
use scatterkit::imaging::normalize;
use scatterkit::inversion::{project, regularizer, relative_error};
use scatterkit::io::{decode_cplx, decode_csv, decode_real, encode_cplx, encode_csv, encode_real};
use scatterkit::support::{support_of, threshold, SupportMask};
use scatterkit::{ContrastField, Cplx, DirectionSet, FarFieldMatrix, Grid};

fn cplx_matrix(max_side: usize) -> impl Strategy<Value = Array2<Cplx<f64>>> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(r, c)| {
        prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v.into_iter().map(|(a, b)| Cplx::new(a, b)).collect()).unwrap())
    })
}

fn real_matrix(side: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.0..1.0f64, side * side).prop_map(move |v| Array2::from_shape_vec((side, side), v).unwrap())
}

fn mask(side: usize) -> impl Strategy<Value = Array2<bool>> {
    prop::collection::vec(any::<bool>(), side * side).prop_map(move |v| Array2::from_shape_vec((side, side), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_formats_roundtrip(a in cplx_matrix(9)) {
        prop_assert_eq!(decode_cplx(&encode_cplx(&a).unwrap()).unwrap(), a.clone());
        let re = a.mapv(|z| z.re);
        prop_assert_eq!(decode_real(&encode_real(&re).unwrap()).unwrap(), re.clone());
        prop_assert_eq!(decode_csv(&encode_csv(&re)).unwrap(), re);
    }

    #[test]
    fn normalize_has_unit_max_and_is_idempotent(a in cplx_matrix(8)) {
        let n = normalize(&a);
        let max = n.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if a.iter().any(|z| z.norm() > 0.0) {
            assert_relative_eq!(max, 1.0, epsilon = 1e-15);
        }
        let nn = normalize(&n);
        for (x, y) in n.iter().zip(nn.iter()) {
            prop_assert!((x - y).norm() <= 1e-15);
        }
    }

    #[test]
    fn projection_is_idempotent_and_confined(a in cplx_matrix(6).prop_filter("square 6", |a| a.dim() == (6, 6)), s in mask(6)) {
        let g = Grid::new(3.0f64, 6).unwrap();
        let m = SupportMask::new(g, s.clone()).unwrap();
        let p = project(&m, &a).unwrap();
        prop_assert_eq!(project(&m, &p).unwrap(), p.clone());
        for (z, on) in p.iter().zip(s.iter()) {
            if !on { prop_assert_eq!(*z, Cplx::new(0.0, 0.0)); }
        }
        prop_assert_eq!(regularizer(&m, &p), 0.0);
        let off = &a - &p;
        assert_relative_eq!(regularizer(&m, &a), 0.5 * frobenius(&off).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn threshold_is_monotone(a in real_matrix(7), g1 in 0.01..0.99f64, g2 in 0.01..0.99f64) {
        let g = Grid::new(3.0f64, 7).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let mlo = threshold(g, &a, lo).unwrap();
        let mhi = threshold(g, &a, hi).unwrap();
        for (l, h) in mlo.values().iter().zip(mhi.values()) {
            prop_assert!(!h || *l);
        }
    }

    #[test]
    fn noise_norm_is_exact(a in cplx_matrix(7), delta in 0.001..0.5f64, seed in any::<u64>()) {
        prop_assume!(a.iter().any(|z| z.norm() > 0.0));
        let (p, q) = a.dim();
        let u = FarFieldMatrix::new(a, 1.0, DirectionSet::new(q).unwrap(), DirectionSet::new(p).unwrap(), 0.0).unwrap();
        let n = add_noise(&u, delta, seed).unwrap();
        assert_relative_eq!(frobenius(&(n.values() - u.values())) / u.norm(), delta, max_relative = 1e-12);
        prop_assert_eq!(add_noise(&u, delta, seed).unwrap(), n);
    }

    #[test]
    fn relative_error_vanishes_on_truth(a in cplx_matrix(5)) {
        let n = a.mapv(|z| z + Cplx::new(2e3, 0.0));
        prop_assert_eq!(relative_error(&n, &n).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenes_satisfy_invariants(seed in any::<u64>()) {
        let s = sample_scene(seed, 3.0).unwrap();
        prop_assert!((2..=3).contains(&s.ellipses.len()));
        for e in &s.ellipses {
            prop_assert!((0.6..1.2).contains(&e.a) && (0.3..0.6).contains(&e.b) && e.a > e.b);
            prop_assert!((1.0..3.0).contains(&e.value));
            prop_assert!((0.0..std::f64::consts::TAU).contains(&e.theta));
            prop_assert!(e.center[0].hypot(e.center[1]) + e.a <= 3.0);
        }
    }

    #[test]
    fn mask_matches_indicator_raster(seed in any::<u64>()) {
        let s = sample_scene(seed, 3.0).unwrap();
        let g = Grid::new(3.0f64, 40).unwrap();
        let m = rasterize(&s, &g).unwrap();
        let mask = support_of(&m);
        for ((i, j), on) in mask.values().indexed_iter() {
            let c = g.center(i, j);
            prop_assert_eq!(*on, s.ellipses.iter().any(|e| e.contains(c)));
        }
        let scaled = scale_to_max(&m, 3.0).unwrap();
        assert_relative_eq!(scaled.max_modulus(), 3.0, epsilon = 1e-15);
        prop_assert_eq!(support_of(&scaled), mask);
    }

    #[test]
    fn born_is_linear(c in -3.0..3.0f64, seed in 0u64..1000) {
        let g = Grid::new(3.0f64, 12).unwrap();
        let m = rasterize(&sample_scene(seed, 3.0).unwrap(), &g).unwrap();
        let (inc, obs) = (DirectionSet::new(3).unwrap(), DirectionSet::new(5).unwrap());
        let a = born_far_field(&m, 1.0, inc, obs).unwrap();
        let b = born_far_field(&m.scaled(c), 1.0, inc, obs).unwrap();
        let diff = frobenius(&(b.values() - &a.values().mapv(|z| z * c)));
        prop_assert!(diff <= 1e-12 * (1.0 + a.norm()));
    }
}

#[test]
fn contrast_io_through_tempdir() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(3.0f64, 16).unwrap();
    let m = rasterize(&sample_scene(1, 3.0).unwrap(), &g).unwrap();
    let p = dir.path().join("m.cplx1");
    scatterkit::io::save_contrast(&p, &m, serde_json::Value::Null).unwrap();
    let back: ContrastField<f64> = scatterkit::io::load_contrast(&p).unwrap();
    assert_eq!(back, m);
}
