use mcaf_core::autodiff::check::{grad_check, GradCheckConfig, GraphFn, RandomGraph};
use mcaf_core::autodiff::ops;
use mcaf_core::tensor::kernels::ConvGeom;
use mcaf_core::{Bound, ParamStore, Result, Scalar, SeededRng, Tensor, Var};

fn store(entries: &[(&str, [usize; 4])], seed: u64) -> ParamStore {
    let mut rng = SeededRng::new(seed);
    let mut s = ParamStore::new();
    for (name, dims) in entries {
        // Keep values away from zero so kinked ops stay off their kinks.
        let t = Tensor::from_fn(*dims, |_| {
            let v = rng.uniform_range(0.2, 1.0);
            (if rng.below(2) == 0 { -v } else { v }) as f32
        });
        s.insert(*name, t).unwrap();
    }
    s
}

#[derive(Clone, Copy, Debug)]
enum Case {
    SubMul,
    Relu,
    Clamp,
    MaxMeanC,
    MeanHw,
    MatmulTransposes,
    ConcatSlice,
    GroupedStridedConv,
    Sum,
}

impl GraphFn for Case {
    fn build<T: Scalar>(&self, p: &Bound<T>) -> Result<Var<T>> {
        let a = p.get("a")?;
        let b = p.get("b")?;
        let out = match self {
            Case::SubMul => ops::mul(&ops::sub(a, b)?, a)?,
            Case::Relu => ops::relu(&ops::mul(a, b)?),
            Case::Clamp => ops::clamp(&ops::scale(a, 0.9), -0.5, 0.5),
            Case::MaxMeanC => ops::add(&ops::max_c(a), &ops::mean_c(&ops::mul(a, b)?))?,
            Case::MeanHw => ops::mul(&ops::mean_hw(a), &ops::mean_hw(b))?,
            Case::MatmulTransposes => {
                let m = ops::matmul(a, true, b, false)?;
                let n = ops::matmul(b, true, a, false)?;
                ops::add(&ops::matmul(&m, false, &n, true)?, &ops::sigmoid(&m))?
            }
            Case::ConcatSlice => {
                let cat = ops::concat_channels(&[a.clone(), ops::square(b), a.clone()])?;
                ops::mul(
                    &ops::slice_channels(&cat, 1, 4)?,
                    &ops::slice_channels(&cat, 3, 4)?,
                )?
            }
            Case::GroupedStridedConv => ops::conv2d(a, b, None, ConvGeom::new(2, 1, 2))?,
            Case::Sum => ops::scale(&ops::sum(&ops::mul(a, b)?), 0.5),
        };
        let w = Var::constant(Tensor::from_fn(out.dims(), |[_, c, y, x]| {
            T::of(((c + 2 * y + 3 * x) % 5) as f64 - 2.0)
        }));
        Ok(ops::sum(&ops::mul(&out, &w)?))
    }
}

fn params_for(case: Case) -> ParamStore {
    let e = [1, 4, 3, 5];
    match case {
        Case::MatmulTransposes => store(&[("a", [2, 1, 4, 3]), ("b", [2, 1, 4, 3])], 1),
        Case::GroupedStridedConv => store(&[("a", [2, 4, 7, 6]), ("b", [6, 2, 3, 3])], 2),
        Case::MeanHw => store(&[("a", e), ("b", [1, 4, 1, 1])], 3),
        _ => store(&[("a", e), ("b", e)], 4),
    }
}

#[test]
fn individual_ops_pass_grad_check() {
    for case in [
        Case::SubMul,
        Case::Relu,
        Case::Clamp,
        Case::MaxMeanC,
        Case::MeanHw,
        Case::MatmulTransposes,
        Case::ConcatSlice,
        Case::GroupedStridedConv,
        Case::Sum,
    ] {
        let cfg = GradCheckConfig {
            samples_per_param: None,
            ..GradCheckConfig::default()
        };
        let r =
            grad_check(&case, &params_for(case), cfg).unwrap_or_else(|e| panic!("{case:?}: {e}"));
        assert!(r.max_rel_err() <= 1e-4, "{case:?}");
    }
}

#[test]
fn random_graphs_pass_grad_check() {
    for seed in 1000..1030 {
        let (g, s) = RandomGraph::generate(seed).unwrap();
        let cfg = GradCheckConfig {
            samples_per_param: None,
            seed,
            ..GradCheckConfig::default()
        };
        grad_check(&g, &s, cfg).unwrap_or_else(|e| panic!("seed {seed} {:?}: {e}", g.ops));
    }
}

#[test]
fn random_graphs_cover_every_op() {
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..300 {
        for op in RandomGraph::generate(seed).unwrap().0.ops {
            seen.insert(
                format!("{op:?}")
                    .split([' ', '(', '{'])
                    .next()
                    .unwrap()
                    .to_string(),
            );
        }
    }
    assert_eq!(seen.len(), 17, "{seen:?}");
}

#[test]
fn gradients_accumulate_over_reuse() {
    let x = Var::leaf(Tensor::<f64>::full([1, 1, 1, 3], 2.0));
    // y = sum(x·x + x) → dy/dx = 2x + 1
    let y = ops::sum(&ops::add(&ops::mul(&x, &x).unwrap(), &x).unwrap());
    y.backward();
    assert_eq!(x.grad().unwrap().data(), &[5.0, 5.0, 5.0]);
}

#[test]
fn f32_and_f64_graphs_agree() {
    let (g, s) = RandomGraph::generate(77).unwrap();
    let a = g.build(&Bound::<f32>::frozen(&s)).unwrap().value().item() as f64;
    let b = g.build(&Bound::<f64>::frozen(&s)).unwrap().value().item();
    assert!((a - b).abs() <= 1e-3 * b.abs().max(1.0), "{a} vs {b}");
}
