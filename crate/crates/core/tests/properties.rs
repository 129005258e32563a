use maxformer::compiler::{
    compile_maxout_layer_seq, compile_maxout_token, decompose_rank, relu_layer_as_maxout, CompileOptions,
};
use maxformer::maxout_eval::{eval_deep_maxout, eval_maxout_layer, from_fn, VectorFunction};
use maxformer::netspec::{random_spec, Dims, SpecDocument, SpecKind};
use maxformer::regions::{count_regions_1d, transformer_region_lower_bound, Slice};
use maxformer::scalar::rational_from_f64;
use maxformer::transformer::{
    attn_activation, block_forward, transformer_forward, AttentionHead, AttentionMode, FeedForward,
    NetFunction, TransformerBlock,
};
use maxformer::verify::{check_exact_equivalence, check_softmax_max_bound, estimate_lipschitz};
use maxformer::{devectorize, parse_spec, serialize_spec, vectorize, DomainBox, Matrix, MaxoutLayerSpec};
use proptest::prelude::*;

fn layer(seed: u64, n_in: usize, p: usize, m_out: usize) -> MaxoutLayerSpec<f64> {
    let dims = Dims { n: n_in, t: 1, p, m: m_out, depth: 1 };
    match random_spec(SpecKind::MaxoutLayer, dims, 1.0, seed).unwrap() {
        SpecDocument::MaxoutLayer(f) => f,
        _ => unreachable!(),
    }
}

fn seq_layer(seed: u64, n: usize, t: usize, p: usize, m: usize) -> MaxoutLayerSpec<f64> {
    let dims = Dims { n, t, p, m, depth: 1 };
    match random_spec(SpecKind::MaxoutLayer, dims, 1.0, seed).unwrap() {
        SpecDocument::MaxoutLayer(f) => f,
        _ => unreachable!(),
    }
}

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |i, j| values[(i * cols + j) % values.len()])
}

fn kind() -> impl Strategy<Value = SpecKind> {
    prop_oneof![
        Just(SpecKind::MaxoutLayer),
        Just(SpecKind::DeepMaxout),
        Just(SpecKind::ReluNet),
        Just(SpecKind::CpwlPair),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn token_intervals_are_separated(a in -5.0f64..5.0, w in 0.1f64..5.0, t in 1usize..8, frac in 0.05f64..0.95) {
        let b = a + w;
        let delta = frac * w / (t as f64 + 1.0);
        let domain = DomainBox::with_delta(a, b, 1, t, delta).unwrap();
        for s in 0..=t {
            for u in (s + 1)..=t {
                let (_, hi) = domain.token_interval(s);
                let (lo, _) = domain.token_interval(u);
                prop_assert!(lo - hi >= delta * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn spec_round_trip_is_bit_exact(kind in kind(), seed in any::<u64>(), n in 1usize..3, t in 1usize..3, p in 1usize..4, depth in 1usize..3, scale in 1e-3f64..1e3) {
        let dims = Dims { n, t, p, m: 1 + seed as usize % 2, depth };
        let spec = random_spec(kind, dims, scale, seed).unwrap();
        let text = serialize_spec(&spec);
        let back = parse_spec(&text).unwrap();
        prop_assert_eq!(serialize_spec(&back), text);
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn random_spec_is_pure(kind in kind(), seed in any::<u64>()) {
        let dims = Dims { n: 2, t: 2, p: 2, m: 1, depth: 2 };
        prop_assert_eq!(random_spec(kind, dims, 1.0, seed).unwrap(), random_spec(kind, dims, 1.0, seed).unwrap());
    }

    #[test]
    fn maxout_layers_are_convex(seed in any::<u64>(), x in prop::collection::vec(-1.0f64..1.0, 3), y in prop::collection::vec(-1.0f64..1.0, 3)) {
        let f = layer(seed, 3, 3, 2);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (eval_maxout_layer(&f, &x).unwrap(), eval_maxout_layer(&f, &y).unwrap(), eval_maxout_layer(&f, &mid).unwrap());
        for i in 0..2 {
            let chord = 0.5 * (fx[i] + fy[i]);
            prop_assert!(fm[i] <= chord + 1e-12 * (1.0 + chord.abs()));
        }
    }

    #[test]
    fn maxout_layers_have_few_kinks_per_output(seed in any::<u64>(), p in 1usize..5) {
        let f = layer(seed, 2, p, 2);
        let one = |v: Vec<f64>| devectorize(&v, 2, 1).unwrap();
        let slice = Slice::line(one(vec![0.1, -0.2]), one(vec![1.0, 0.7]), [-1.0, 1.0], 64);
        for i in 0..2 {
            let out = from_fn(2, 1, |x: &[f64]| vec![eval_maxout_layer(&f, x).unwrap()[i]]);
            let count = count_regions_1d(&out, &slice).unwrap();
            prop_assert!(count.count <= p);
            let h = 2.0 / 256.0;
            for k in 1..256 {
                let s = -1.0 + h * k as f64;
                let at = |s: f64| out.eval(&[0.1 + s, -0.2 + 0.7 * s]).unwrap()[0];
                prop_assert!(at(s - h) - 2.0 * at(s) + at(s + h) >= -1e-9);
            }
        }
    }

    #[test]
    fn relu_as_maxout_is_exact(values in prop::collection::vec(-2.0f64..2.0, 12), x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let w = matrix(4, 3, &values);
        let b: Vec<f64> = values[..4].to_vec();
        let f = relu_layer_as_maxout(&w, &b).unwrap();
        let got = eval_maxout_layer(&f, &x).unwrap();
        for i in 0..4 {
            let pre = w.row(i).iter().zip(&x).fold(0.0, |acc, (a, b)| acc + a * b) + b[i];
            prop_assert_eq!(got[i], pre.max(0.0));
        }
    }

    #[test]
    fn attention_columns_are_stochastic(logits in prop::collection::vec(-50.0f64..50.0, 1..10), lambda in 1e-2f64..1e8) {
        for mode in [AttentionMode::Hardmax, AttentionMode::softmax(lambda).unwrap()] {
            let w = attn_activation(&logits, mode);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let mix: f64 = w.iter().zip(&logits).map(|(a, b)| a * b).sum();
            let lo = logits.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mix >= lo - 1e-12 * (1.0 + lo.abs()) && mix <= hi + 1e-12 * (1.0 + hi.abs()));
        }
    }

    #[test]
    fn softmax_approaches_hardmax(logits in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let mut sorted = logits.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted[0] - sorted[1] > 1e-6);
        let hard = attn_activation(&logits, AttentionMode::Hardmax);
        let soft = attn_activation(&logits, AttentionMode::softmax(1e8).unwrap());
        for (a, b) in hard.iter().zip(&soft) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn blocks_are_permutation_equivariant(values in prop::collection::vec(-1.0f64..1.0, 24), z in prop::collection::vec(-1.0f64..1.0, 12), shift in 1usize..4) {
        let d = 3;
        let head = AttentionHead {
            w_k: matrix(2, d, &values),
            w_q: matrix(2, d, &values[5..]),
            w_v: matrix(d, d, &values[9..]),
            w_o: matrix(d, d, &values[13..]),
        };
        let ff = FeedForward { w1: matrix(4, d, &values[2..]), b1: values[..4].to_vec(), w2: matrix(d, 4, &values[7..]), b2: values[4..7].to_vec() };
        let block = TransformerBlock { heads: vec![head], ff };
        let z = Matrix::from_fn(d, 4, |i, j| z[i * 4 + j]);
        let perm = |m: &Matrix<f64>| Matrix::from_fn(d, 4, |i, j| *m.get(i, (j + shift) % 4));
        for mode in [AttentionMode::Hardmax, AttentionMode::softmax(3.0).unwrap()] {
            let a = perm(&block_forward(&block, &z, mode).unwrap());
            let b = block_forward(&block, &perm(&z), mode).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decomposition_is_exact_in_rationals(seed in any::<u64>(), p in 2usize..7, s in 2usize..4, x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let f = layer(seed, 2, p, 2).map(|w| rational_from_f64(*w));
        let deep = decompose_rank(&f, s).unwrap();
        let x: Vec<_> = x.into_iter().map(rational_from_f64).collect();
        prop_assert_eq!(eval_maxout_layer(&f, &x).unwrap(), eval_deep_maxout(&deep, &x).unwrap());
    }

    #[test]
    fn softmax_max_gap_never_exceeds_bound(d in 1usize..9, lambda in 0.1f64..1e3, seed in any::<u64>()) {
        prop_assert!(check_softmax_max_bound(d, lambda, 200, seed).unwrap().passed);
    }

    #[test]
    fn transformer_bound_grows_with_depth(d in 3usize..40) {
        let a = transformer_region_lower_bound(1, 2, 3, d, 3).unwrap();
        let b = transformer_region_lower_bound(1, 2, 3, d + 1, 3).unwrap();
        let c = transformer_region_lower_bound(1, 2, 3, d + 3, 3).unwrap();
        prop_assert!(b >= a && c > a);
    }

    #[test]
    fn max_of_generic_lines_counts_pieces(k in 1usize..7, tilt in -0.3f64..0.3) {
        let pts: Vec<f64> = (0..k).map(|i| -0.9 + 1.8 * (i as f64 + 0.5) / k as f64).collect();
        let f = from_fn(1, 1, move |x: &[f64]| {
            vec![pts.iter().map(|c| 2.0 * c * x[0] - c * c + tilt * x[0]).fold(f64::NEG_INFINITY, f64::max)]
        });
        let one = |v| devectorize(&[v], 1, 1).unwrap();
        for res in [16, 32, 64] {
            let slice = Slice::line(one(0.0), one(1.0), [-1.0, 1.0], res);
            prop_assert_eq!(count_regions_1d(&f, &slice).unwrap().count, k);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn compiled_layers_match_and_verify_is_deterministic(seed in any::<u64>(), n in 1usize..3, t in 2usize..4, m in 1usize..3, p_frac in 0.0f64..1.0) {
        let p = 1 + (p_frac * t as f64) as usize % t;
        let f = seq_layer(seed, n, t, p, m);
        let domain = DomainBox::new(-1.0, 1.0, n, t).unwrap();
        let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default()).unwrap();
        prop_assert!(compiled.report.audit.within_budget);
        let a = check_exact_equivalence(&compiled.net, &f, &domain, 200, 1e-9, seed).unwrap();
        let b = check_exact_equivalence(&compiled.net, &f, &domain, 200, 1e-9, seed).unwrap();
        prop_assert!(a.passed);
        prop_assert_eq!(a, b);
        let net = NetFunction::new(&compiled.net, AttentionMode::Hardmax);
        let lip = estimate_lipschitz(&net, &domain, 100, seed).unwrap();
        prop_assert!(lip <= p as f64 * f.weight_bound() * (1.0 + 1e-6));
    }

    #[test]
    fn token_construction_is_silent_off_target(seed in any::<u64>(), t in 2usize..5, k_frac in 0.0f64..1.0, x in prop::collection::vec(-1.0f64..1.0, 8)) {
        let k = (k_frac * t as f64) as usize % t;
        let f = layer(seed, t, 1 + seed as usize % t, 2);
        let domain = DomainBox::new(-1.0, 1.0, 1, t).unwrap();
        let compiled = compile_maxout_token(&f, &domain, k, &CompileOptions::default()).unwrap();
        prop_assert!(compiled.report.audit.within_budget);
        let xs = devectorize(&x[..t], 1, t).unwrap();
        let out = transformer_forward(&compiled.net, &xs, AttentionMode::Hardmax).unwrap();
        let want = eval_maxout_layer(&f, &vectorize(&xs)).unwrap();
        for c in 0..t {
            for i in 0..2 {
                let v = *out.0.get(i, c);
                if c == k {
                    prop_assert!((v - want[i]).abs() <= 1e-9 * (1.0 + want[i].abs()));
                } else {
                    prop_assert!(v.abs() <= 1e-9);
                }
            }
        }
    }
}
