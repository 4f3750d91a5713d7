use mcaf_core::autodiff::check::{grad_check, GradCheckConfig, GraphFn};
use mcaf_core::loss::{total_loss, LossConfig};
use mcaf_core::model::csam::{csam_forward, init_csam};
use mcaf_core::model::mfib::{
    conv_stack_macs, init_mfib, init_mfiba, mfib_forward, mfiba_forward, mfiba_macs,
};
use mcaf_core::model::*;
use mcaf_core::tensor::kernels::{mac_count, reset_mac_count};
use mcaf_core::{weights, Bound, Error, ParamStore, Result, Scalar, SeededRng, Tensor, Var};
use proptest::prelude::*;

fn input(dims: [usize; 4], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    Tensor::from_fn(dims, |_| rng.uniform_range(lo, hi) as f32)
}

fn jitter(store: &mut ParamStore, std: f64, seed: u64) {
    let mut rng = SeededRng::new(seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for n in names {
        let t = store.get(&n).unwrap();
        let noisy = Tensor::from_fn(t.dims(), |i| t.at(i) + rng.normal(0.0, std) as f32);
        store.set(&n, noisy).unwrap();
    }
}

#[test]
fn untrained_network_is_clamped_identity() {
    let mut cfgs = vec![ModelConfig::toy()];
    for (csam, mfafm) in [(false, true), (true, false), (false, false)] {
        cfgs.push(ModelConfig {
            use_csam: csam,
            use_mfafm: mfafm,
            ..ModelConfig::toy()
        });
    }
    for (i, cfg) in cfgs.into_iter().enumerate() {
        let net = McafNet::new(cfg, i as u64).unwrap();
        let x = input([2, 3, 16, 24], -0.3, 1.3, i as u64);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.data(), x.map(|v| v.clamp(0.0, 1.0)).data());
    }
}

#[test]
fn mfib_with_zero_output_layer_is_identity() {
    let cfg = ModelConfig::toy();
    let mut store = ParamStore::new();
    init_mfib(&mut store, &mut SeededRng::new(1), "b", 16, &cfg).unwrap();
    let x = input([1, 16, 12, 10], -2.0, 2.0, 2);
    let p = Bound::<f32>::frozen(&store);
    let y = mfib_forward(&Var::constant(x.clone()), &p, "b").unwrap();
    assert_eq!(y.value().data(), x.data());
    // A live output layer changes the result.
    jitter(&mut store, 0.1, 3);
    let p = Bound::<f32>::frozen(&store);
    let y = mfib_forward(&Var::constant(x.clone()), &p, "b").unwrap();
    assert!(y.value().max_abs_diff(&x) > 1e-3);
}

#[test]
fn mfiba_cheaper_than_conv_stack() {
    let cfg = ModelConfig::default();
    for c in [24, 48, 96] {
        for (h, w) in [(256, 256), (64, 64), (32, 48)] {
            let m = mfiba_macs(c, h, w, &cfg);
            let dense = conv_stack_macs(c, h, w, cfg.mfib_cascade);
            assert!(m < dense, "c={c}: {m} vs {dense}");
        }
    }
}

#[test]
fn mfiba_counter_matches_closed_form() {
    let cfg = ModelConfig::default();
    let mut store = ParamStore::new();
    init_mfiba(&mut store, &mut SeededRng::new(1), "a", 24, 3, &cfg).unwrap();
    let p = Bound::<f32>::frozen(&store);
    reset_mac_count();
    mfiba_forward(
        &Var::constant(input([1, 24, 32, 32], 0.0, 1.0, 1)),
        &p,
        "a",
        3,
    )
    .unwrap();
    assert_eq!(mac_count(), mfiba_macs(24, 32, 32, &cfg));
}

#[test]
fn rejects_bad_inputs() {
    let net = McafNet::new(ModelConfig::toy(), 0).unwrap();
    assert!(matches!(
        net.infer(&Tensor::zeros([1, 3, 18, 16])),
        Err(Error::Shape { .. })
    ));
    assert!(matches!(
        net.infer(&Tensor::zeros([1, 1, 16, 16])),
        Err(Error::Shape { .. })
    ));
    let bad = ModelConfig {
        embed_dims: [6, 16, 32, 16, 8],
        ..ModelConfig::toy()
    };
    assert!(McafNet::new(bad, 0).is_err());
}

#[test]
fn config_text_round_trip() {
    let cfg = ModelConfig {
        use_csam: false,
        mlp_ratio: 3.0,
        ..ModelConfig::toy()
    };
    assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    assert!(ModelConfig::from_kv("bogus=1").is_err());
    assert!(ModelConfig::from_kv("depths=1,2").is_err());
    assert_eq!(
        ModelConfig::from_kv("# defaults\n\n").unwrap(),
        ModelConfig::default()
    );
}

#[test]
fn weights_round_trip_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = init_params(&ModelConfig::toy(), 3).unwrap();
    jitter(&mut store, 0.1, 4);
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    weights::save(&a, &store).unwrap();
    let back = weights::load(&a).unwrap();
    weights::save(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let cost = count_params_flops(&ModelConfig::toy(), 64, 64).unwrap();
    assert_eq!(back.num_elements() as u64, cost.params);

    let mut fresh = init_params(&ModelConfig::toy(), 99).unwrap();
    weights::load_into(&a, &mut fresh).unwrap();
    assert!(fresh.iter().zip(store.iter()).all(|(x, y)| x == y));
    let mut other = init_params(&ModelConfig::default(), 0).unwrap();
    assert!(weights::load_into(&a, &mut other).is_err());
}

#[test]
fn batch_items_are_independent() {
    let mut net = McafNet::new(ModelConfig::toy(), 5).unwrap();
    jitter(&mut net.params, 0.05, 6);
    let x = input([2, 3, 16, 16], 0.0, 1.0, 7);
    let both = net.infer(&x).unwrap();
    for b in 0..2 {
        let one = Tensor::from_fn([1, 3, 16, 16], |[_, c, y, xx]| x.at([b, c, y, xx]));
        let y = net.infer(&one).unwrap();
        let slice = Tensor::from_fn([1, 3, 16, 16], |[_, c, yy, xx]| both.at([b, c, yy, xx]));
        assert!(y.max_abs_diff(&slice) < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn forward_shape_contract(
        dims in proptest::array::uniform5(1usize..4),
        depths in proptest::array::uniform5(1usize..3),
        cascade in 1usize..4,
        query in 2usize..9,
        csam in any::<bool>(),
        mfafm in any::<bool>(),
        batch in 1usize..3,
        hq in 2usize..5,
        wq in 2usize..5,
        seed in any::<u64>(),
    ) {
        let mut embed = dims.map(|d| 4 * d);
        if !mfafm {
            embed[3] = embed[1];
            embed[4] = embed[0];
        }
        let cfg = ModelConfig {
            embed_dims: embed,
            depths,
            mfib_cascade: cascade,
            query_base: query,
            use_csam: csam,
            use_mfafm: mfafm,
            ..ModelConfig::toy()
        };
        let (h, w) = (4 * hq, 4 * wq);
        let mut store = init_params(&cfg, seed).unwrap();
        jitter(&mut store, 0.05, seed);
        let cost = count_params_flops(&cfg, h, w).unwrap();
        prop_assert_eq!(cost.params, store.num_elements() as u64);
        let p = Bound::<f32>::frozen(&store);
        reset_mac_count();
        let out = mcafnet_forward(&Var::constant(input([batch, 3, h, w], 0.0, 1.0, seed)), &p, &cfg).unwrap();
        // Query refinement runs once per forward, not once per batch item,
        // so the per-image closed form is exact only at batch 1.
        if batch == 1 {
            prop_assert_eq!(mac_count(), cost.macs);
        } else {
            prop_assert!(mac_count() < cost.macs * batch as u64);
        }
        prop_assert_eq!(out.dehazed.dims(), [batch, 3, h, w]);
        prop_assert!(out.dehazed.value().data().iter().all(|v| (0.0..=1.0).contains(v)));
        if csam {
            let f: Vec<_> = out.fakes.iter().map(|v| v.dims()).collect();
            prop_assert_eq!(f, vec![[batch, 3, h / 2, w / 2], [batch, 3, h, w]]);
            let a: Vec<_> = out.attention.iter().map(|v| v.dims()).collect();
            prop_assert_eq!(a, vec![[batch, 1, embed[3], embed[3]], [batch, 1, embed[4], embed[4]]]);
        } else {
            prop_assert!(out.fakes.is_empty() && out.attention.is_empty());
        }
    }

    #[test]
    fn csam_rows_are_distributions(seed in any::<u64>(), scale in 0.1f64..20.0, h in 1usize..6, w in 1usize..6) {
        let mut store = ParamStore::new();
        init_csam(&mut store, &mut SeededRng::new(seed), "c", 16, 8).unwrap();
        let p = Bound::<f32>::frozen(&store);
        let x = input([2, 16, h, w], -scale, scale, seed ^ 1);
        let o = csam_forward(&Var::constant(x), &p, "c").unwrap();
        let a = o.attention.value();
        prop_assert_eq!(a.dims(), [2, 1, 8, 8]);
        for row in a.data().chunks(8) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6, "row sum {}", s);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        prop_assert_eq!(o.features.dims(), [2, 8, 2 * h, 2 * w]);
    }
}

/// Scalar objective over the toy network for the gradient check.
struct ToyObjective {
    cfg: ModelConfig,
    x: Tensor<f64>,
    y: Tensor<f64>,
    loss: LossConfig,
}

impl GraphFn for ToyObjective {
    fn build<T: Scalar>(&self, p: &Bound<T>) -> Result<Var<T>> {
        let out = mcafnet_forward(&Var::constant(self.x.cast()), p, &self.cfg)?;
        total_loss(
            &out.dehazed,
            &Var::constant(self.y.cast()),
            &out.fakes,
            &self.loss,
        )
    }
}

#[test]
fn toy_network_gradients_match_finite_differences() {
    let cfg = ModelConfig::toy();
    let mut store = init_params(&cfg, 11).unwrap();
    // Wake the zero-initialised layers so every path carries gradient.
    jitter(&mut store, 0.02, 12);
    let f = ToyObjective {
        cfg,
        x: input([1, 3, 16, 16], 0.3, 0.7, 13).cast(),
        y: input([1, 3, 16, 16], 0.0, 1.0, 14).cast(),
        loss: LossConfig::default(),
    };
    let report = grad_check(
        &f,
        &store,
        GradCheckConfig {
            tol: 1e-3,
            samples_per_param: Some(3),
            seed: 15,
            ..GradCheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.checked >= 3 * store.len() / 2);
    assert!(report.max_rel_err() <= 1e-3);
}
