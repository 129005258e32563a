use maxformer::compiler::{
    compile_cpwl, compile_deep_maxout, compile_general, compile_maxout_layer_seq,
    compile_maxout_token, compile_relu, decompose_rank, CompileOptions, Compiled, TheoremId,
};
use maxformer::maxout_eval::{devectorize, vectorize, VectorFunction};
use maxformer::netspec::{random_spec, Dims, SpecDocument, SpecKind};
use maxformer::rng::substream;
use maxformer::transformer::{transformer_forward, transformer_trace, AttentionMode};
use maxformer::{CpwlPairSpec, DeepMaxoutSpec, DomainBox, Matrix, MaxoutLayerSpec, SeqMatrix};
use rand::Rng as _;

fn sample(domain: &DomainBox, rng: &mut maxformer::rng::Rng) -> SeqMatrix<f64> {
    let v: Vec<f64> = (0..domain.n * domain.t)
        .map(|_| rng.gen_range(domain.a..=domain.b))
        .collect();
    devectorize(&v, domain.n, domain.t).unwrap()
}

/// Largest scaled deviation `|net - oracle| / (1 + |oracle|)`.
fn max_error(
    compiled: &Compiled,
    oracle: &dyn VectorFunction<f64>,
    domain: &DomainBox,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = substream(seed, "compiler-test");
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = sample(domain, &mut rng);
        let out = transformer_forward(&compiled.net, &x, AttentionMode::Hardmax).unwrap();
        let want = oracle.eval(&vectorize(&x)).unwrap();
        for (a, b) in vectorize(&out).iter().zip(&want) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    worst
}

fn abs_layer_seq() -> MaxoutLayerSpec<f64> {
    // Both output tokens equal |x_1 + x_2|.
    let w = Matrix::from_rows(vec![vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
    MaxoutLayerSpec::new(vec![w.clone(), w], vec![vec![0.0, 0.0]; 2]).unwrap()
}

#[test]
fn abs_sequence_layer() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let f = abs_layer_seq();
    let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default()).unwrap();
    let audit = &compiled.report.audit;
    assert!(audit.within_budget, "{audit:?}");
    assert_eq!(audit.claimed.d, 10);
    assert_eq!(audit.actual.depth, 3);
    assert!(max_error(&compiled, &f, &domain, 1000, 1) <= 1e-9);
    let x = devectorize(&[-2.0 / 3.0, -0.5], 1, 2).unwrap();
    let out = transformer_forward(&compiled.net, &x, AttentionMode::Hardmax).unwrap();
    for v in vectorize(&out) {
        assert!((v - 7.0 / 6.0).abs() < 1e-12);
    }
}

#[test]
fn weights_round_trip_through_json() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let compiled = compile_maxout_layer_seq(&abs_layer_seq(), &domain, &CompileOptions::default()).unwrap();
    assert!(compiled.net.blocks.iter().any(|b| b.ff.width() == 0));
    let text = compiled.net.to_json();
    let back = maxformer::TransformerNet::from_json(&text).unwrap();
    assert_eq!(back, compiled.net);
    assert_eq!(back.to_json(), text);
}

#[test]
fn single_token_construction() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 3).unwrap();
    let w = Matrix::from_rows(vec![vec![1.0, 0.5, -1.0], vec![-1.0, 0.0, 1.0]]).unwrap();
    let f = MaxoutLayerSpec::new(vec![w], vec![vec![0.1, -0.2]]).unwrap();
    let compiled = compile_maxout_token(&f, &domain, 1, &CompileOptions::default()).unwrap();
    assert!(compiled.report.audit.within_budget);
    let mut rng = substream(2, "token");
    for _ in 0..500 {
        let x = sample(&domain, &mut rng);
        let out = transformer_forward(&compiled.net, &x, AttentionMode::Hardmax).unwrap();
        let want = f.eval(&vectorize(&x)).unwrap()[0];
        assert!((out.0.get(0, 1) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        assert!(out.0.get(0, 0).abs() <= 1e-9);
        assert!(out.0.get(0, 2).abs() <= 1e-9);
    }
}

#[test]
fn constant_layer() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let f = MaxoutLayerSpec::new(vec![Matrix::zeros(2, 2)], vec![vec![0.3, -4.0]]).unwrap();
    let compiled = compile_maxout_token(&f, &domain, 0, &CompileOptions::default()).unwrap();
    assert!(max_error(&compiled, &f, &domain, 100, 3) < 1e-12);
}

#[test]
fn random_shallow_layers() {
    for seed in 0..10u64 {
        let t = 2 + (seed as usize % 3);
        let dims = Dims {
            n: 1 + seed as usize % 3,
            t,
            p: 1 + seed as usize % t,
            m: 1 + seed as usize % 2,
            depth: 1,
        };
        let SpecDocument::MaxoutLayer(f) = random_spec(SpecKind::MaxoutLayer, dims, 1.0, seed).unwrap()
        else {
            unreachable!()
        };
        let domain = DomainBox::new(-1.0, 1.0, dims.n, t).unwrap();
        let compiled = compile_maxout_layer_seq(&f, &domain, &CompileOptions::default()).unwrap();
        assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
        let err = max_error(&compiled, &f, &domain, 300, seed);
        assert!(err <= 1e-9, "seed {seed}: {err}");
    }
}

#[test]
fn random_deep_nets_and_probes() {
    for seed in 0..6u64 {
        let t = 2 + seed as usize % 2;
        let dims = Dims {
            n: 1 + seed as usize % 2,
            t,
            p: 2,
            m: 1 + seed as usize % 2,
            depth: 2 + seed as usize % 2,
        };
        let SpecDocument::DeepMaxout(net) = random_spec(SpecKind::DeepMaxout, dims, 1.0, seed).unwrap()
        else {
            unreachable!()
        };
        let domain = DomainBox::new(-1.0, 1.0, dims.n, t).unwrap();
        let compiled = compile_deep_maxout(&net, &domain, &CompileOptions::default()).unwrap();
        assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
        assert_eq!(compiled.report.audit.theorem_id, TheoremId::DeepPleT);
        let err = max_error(&compiled, &net, &domain, 300, seed);
        assert!(err <= 1e-9, "seed {seed}: {err}");
        let mut rng = substream(seed, "probe");
        let x = sample(&domain, &mut rng);
        let states = transformer_trace(&compiled.net, &x, AttentionMode::Hardmax).unwrap();
        assert_eq!(compiled.report.probes.len(), dims.depth - 1);
        for probe in &compiled.report.probes {
            for &row in &probe.rows {
                for c in 0..=t {
                    let (lo, hi) = probe.geometry.interval(c);
                    let v = *states[probe.state].get(row, c);
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{v} not in [{lo}, {hi}]");
                }
            }
        }
    }
}

#[test]
fn high_rank_layers_use_tournaments() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 3).unwrap();
    let mut rng = substream(5, "rank");
    let weights = (0..3)
        .map(|_| Matrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let biases = (0..3)
        .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let f = MaxoutLayerSpec::new(weights, biases).unwrap();
    let options = CompileOptions {
        s: Some(3),
        ..CompileOptions::default()
    };
    let compiled = compile_general(&SpecDocument::MaxoutLayer(f.clone()), &domain, &options).unwrap();
    assert_eq!(compiled.report.audit.theorem_id, TheoremId::ShallowPgtT);
    assert_eq!(compiled.net.blocks.len(), 6);
    assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
    assert!(max_error(&compiled, &f, &domain, 500, 5) <= 1e-9);

    let options = CompileOptions {
        s: Some(2),
        ..CompileOptions::default()
    };
    let compiled = compile_general(&SpecDocument::MaxoutLayer(f.clone()), &domain, &options).unwrap();
    assert_eq!(compiled.net.blocks.len(), 12);
    assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
    assert!(max_error(&compiled, &f, &domain, 500, 6) <= 1e-9);
}

#[test]
fn deep_high_rank() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let dims = Dims {
        n: 1,
        t: 2,
        p: 4,
        m: 2,
        depth: 2,
    };
    let SpecDocument::DeepMaxout(net) = random_spec(SpecKind::DeepMaxout, dims, 1.0, 9).unwrap()
    else {
        unreachable!()
    };
    let compiled = compile_general(
        &SpecDocument::DeepMaxout(net.clone()),
        &domain,
        &CompileOptions::default(),
    )
    .unwrap();
    assert_eq!(compiled.report.audit.theorem_id, TheoremId::DeepPgtT);
    assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
    assert!(max_error(&compiled, &net, &domain, 500, 9) <= 1e-9);
}

#[test]
fn relu_nets() {
    for (seed, depth) in [(0u64, 1usize), (1, 2), (2, 1), (3, 2)] {
        let dims = Dims {
            n: 1 + seed as usize % 2,
            t: 2 + seed as usize % 2,
            p: 2,
            m: 1 + seed as usize % 2,
            depth,
        };
        let SpecDocument::ReluNet(net) = random_spec(SpecKind::ReluNet, dims, 1.0, seed).unwrap()
        else {
            unreachable!()
        };
        let domain = DomainBox::new(-1.0, 1.0, dims.n, dims.t).unwrap();
        let compiled = compile_relu(&net, &domain, &CompileOptions::default()).unwrap();
        assert_eq!(compiled.net.blocks.len(), 3 * depth + 1);
        assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
        let err = max_error(&compiled, &net, &domain, 300, seed);
        assert!(err <= 1e-9, "seed {seed}: {err}");
    }
}

#[test]
fn cpwl_identity_pair() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    // Token k: g = max(x_k, 0), h = max(-x_k, 0).
    let unit = |k: usize, sign: f64| {
        let mut w = Matrix::zeros(2, 2);
        w.set(0, k, sign);
        w
    };
    let g = MaxoutLayerSpec::new(vec![unit(0, 1.0), unit(1, 1.0)], vec![vec![0.0; 2]; 2]).unwrap();
    let h = MaxoutLayerSpec::new(vec![unit(0, -1.0), unit(1, -1.0)], vec![vec![0.0; 2]; 2]).unwrap();
    let pair = CpwlPairSpec { g, h };
    let compiled = compile_cpwl(&pair, &domain, &CompileOptions::default()).unwrap();
    assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
    let mut rng = substream(4, "cpwl");
    for _ in 0..500 {
        let x = sample(&domain, &mut rng);
        let out = transformer_forward(&compiled.net, &x, AttentionMode::Hardmax).unwrap();
        for (a, b) in vectorize(&out).iter().zip(vectorize(&x)) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn cpwl_high_rank_pair() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let dims = Dims {
        n: 1,
        t: 2,
        p: 4,
        m: 1,
        depth: 1,
    };
    let SpecDocument::CpwlPair(pair) = random_spec(SpecKind::CpwlPair, dims, 1.0, 21).unwrap() else {
        unreachable!()
    };
    let compiled = compile_cpwl(&pair, &domain, &CompileOptions::default()).unwrap();
    assert_eq!(compiled.report.audit.theorem_id, TheoremId::Cpwl);
    assert!(compiled.report.audit.within_budget, "{:?}", compiled.report.audit);
    assert!(max_error(&compiled, &pair, &domain, 500, 21) <= 1e-9);
}

#[test]
fn preconditions() {
    let domain = DomainBox::new(-1.0, 1.0, 1, 2).unwrap();
    let f = MaxoutLayerSpec::new(
        vec![Matrix::zeros(3, 2), Matrix::zeros(3, 2)],
        vec![vec![0.0; 3]; 2],
    )
    .unwrap();
    assert!(compile_maxout_layer_seq(&f, &domain, &CompileOptions::default()).is_err());
    let deep = DeepMaxoutSpec::new(vec![f.clone()]).unwrap();
    assert!(compile_deep_maxout(&deep, &domain, &CompileOptions::default()).is_err());
    let bad_s = CompileOptions {
        s: Some(1),
        ..CompileOptions::default()
    };
    assert!(compile_general(&SpecDocument::MaxoutLayer(f.clone()), &domain, &bad_s).is_err());
    assert_eq!(decompose_rank(&f, 2).unwrap().depth(), 2);
}
