use nalgebra::DMatrix;
use proptest::prelude::*;

use jtqed::cli::output::format_number;
use jtqed::cli::{parse_document, resolve, PRESETS};
use jtqed::fockspace::{annihilator, Factor, HilbertSpace, Operator};
use jtqed::liouville::{Channel, Liouvillian};
use jtqed::spikes::{classify_regime, detect_spikes, gain_ratio, RegimeConfig, SpikeConfig};
use jtqed::C64;

// Samples on a 1/64 grid with power-of-two scales keep every shift and
// rescale exact, so detector decisions can be compared bit for bit.
fn grid_series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..64).prop_map(|k| k as f64 / 64.0), len)
}

fn spiky_series() -> impl Strategy<Value = Vec<f64>> {
    (grid_series(120), prop::collection::vec((1usize..119, 2i32..8), 0..6)).prop_map(|(mut x, spikes)| {
        for (i, h) in spikes {
            x[i] += h as f64;
        }
        x
    })
}

fn times(n: usize, t0: f64) -> Vec<f64> {
    (0..n).map(|i| t0 + 0.5 * i as f64).collect()
}

fn matrix(entries: &[(f64, f64)], d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |r, c| {
        let (re, im) = entries[r * d + c];
        C64::new(re, im)
    })
}

fn hermitian(entries: &[(f64, f64)], d: usize) -> DMatrix<C64> {
    let m = matrix(entries, d);
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spikes_follow_a_time_shift(x in spiky_series(), shift in -64i32..64) {
        let cfg = SpikeConfig::default();
        let a = detect_spikes(&times(x.len(), 0.0), &x, &cfg).unwrap();
        let b = detect_spikes(&times(x.len(), shift as f64), &x, &cfg).unwrap();
        prop_assert_eq!(&a.indices, &b.indices);
        let shifted: Vec<f64> = a.times.iter().map(|t| t + shift as f64).collect();
        prop_assert_eq!(shifted, b.times);
    }

    #[test]
    fn spikes_ignore_offset_and_scale(x in spiky_series(), offset in -16i32..16, exp in -6i32..6) {
        let cfg = SpikeConfig::default();
        let t = times(x.len(), 0.0);
        let s = 2f64.powi(exp);
        let y: Vec<f64> = x.iter().map(|v| s * (v + offset as f64)).collect();
        let a = detect_spikes(&t, &x, &cfg).unwrap();
        let b = detect_spikes(&t, &y, &cfg).unwrap();
        prop_assert_eq!(a.indices, b.indices);
        prop_assert_eq!(a.kinds, b.kinds);
    }

    #[test]
    fn gain_is_scale_free(
        pairs in prop::collection::vec((1i32..1024, 1i32..1024), 1..200),
        exp in -10i32..10,
    ) {
        let n1: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 1024.0).collect();
        let n2: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 1024.0).collect();
        let s = 2f64.powi(exp);
        let a = gain_ratio(&n1, &n2).unwrap();
        let b = gain_ratio(
            &n1.iter().map(|v| v * s).collect::<Vec<_>>(),
            &n2.iter().map(|v| v * s).collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert_eq!(a.summary, b.summary);
        prop_assert_eq!(a.windows, b.windows);
        prop_assert_eq!(a.transmitted_fraction, b.transmitted_fraction);
    }

    #[test]
    fn regime_is_mirror_symmetric(z in prop::collection::vec(-1.0f64..1.0, 32..200)) {
        let cfg = RegimeConfig::default();
        let a = classify_regime(&z, &cfg).unwrap();
        let m: Vec<f64> = z.iter().map(|v| -v).collect();
        let b = classify_regime(&m, &cfg).unwrap();
        prop_assert_eq!(a.regime, b.regime);
        prop_assert_eq!(a.zero_crossings, b.zero_crossings);
        prop_assert_eq!(a.amplitude, b.amplitude);
    }

    #[test]
    fn ladder_commutator_holds_below_the_top_level(n in 2usize..7, with_qubit in any::<bool>()) {
        let mut f = vec![Factor::boson(n), Factor::boson(n + 1)];
        if with_qubit {
            f.insert(0, Factor::qubit());
        }
        let space = HilbertSpace::new(f).unwrap();
        let first = usize::from(with_qubit);
        let a = annihilator(&space, first).unwrap();
        let b = annihilator(&space, first + 1).unwrap();
        let mask = space.truncation_safe_mask();
        for op in [&a, &b] {
            let c = op.commutator(&op.dagger()).unwrap();
            for (r, &ok_r) in mask.iter().enumerate() {
                for (col, &ok_c) in mask.iter().enumerate() {
                    if ok_r && ok_c {
                        let want = if r == col { 1.0 } else { 0.0 };
                        prop_assert!((c.matrix()[(r, col)] - want).norm() < 1e-14);
                    }
                }
            }
        }
        prop_assert!(a.commutator(&b.dagger()).unwrap().max_abs() < 1e-14);
        prop_assert!(a.commutator(&b).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn liouvillian_keeps_trace_and_hermiticity(
        h in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
        c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
        x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
        rate in 0.0f64..2.0,
    ) {
        let space = HilbertSpace::new(vec![Factor::qubit(), Factor::boson(3)]).unwrap();
        let hop = Operator::from_matrix(&space, hermitian(&h, 6)).unwrap();
        let cop = Operator::from_matrix(&space, matrix(&c, 6)).unwrap();
        let a = annihilator(&space, 1).unwrap();
        let l = Liouvillian::new(
            &hop,
            vec![
                Channel { label: "random".into(), operator: cop, rate },
                Channel { label: "loss".into(), operator: a, rate: 0.3 },
            ],
        )
        .unwrap();
        let y = l.apply(&hermitian(&x, 6));
        prop_assert!(y.trace().norm() < 1e-12);
        prop_assert!((&y - y.adjoint()).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn canonical_text_round_trips(
        preset in prop::sample::select(PRESETS.to_vec()),
        n in 3usize..9,
        k in 0.0f64..1.0,
        dt in 0.01f64..0.2,
    ) {
        let doc = parse_document(&format!(
            "preset = {preset}\nmodel.truncation = {n}\nmodel.k_eff = {k}\nrun.dt = {dt}\n"
        ))
        .unwrap();
        let a = resolve(&doc, &[]).unwrap();
        let b = resolve(&parse_document(&a.canonical()).unwrap(), &[]).unwrap();
        prop_assert_eq!(a.canonical(), b.canonical());
        prop_assert_eq!(a.hash(), b.hash());
        let c = resolve(&doc, &[("output.dir".into(), "elsewhere".into())]).unwrap();
        prop_assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn numbers_survive_text(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
    }
}
