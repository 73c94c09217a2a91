//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Run with
//! `cargo test -p qgnn-cli --test acceptance -- --nocapture`
//! to see every line.

use qgnn::counters;
use qgnn::dense::{gemm_f32, qgemm, GemmOperand};
use qgnn::graph::{augment, build_incidence, gcn_norm, EdgeList, GraphViews};
use qgnn::layers::{
    cross_entropy, gat_backward, gat_forward, gcn_backward, gcn_forward, GatLayerParams,
    GcnLayerParams, HeadCombine, Precision,
};
use qgnn::plan::{gat_layer_graph, gcn_layer_graph, plan_quant_reuse};
use qgnn::quant::{
    quantize_tensor, stochastic_round, QuantParams, QuantSpec, QuantizedTensor, Rounding,
};
use qgnn::rng::RngState;
use qgnn::sparse::{
    incidence_spmm, plan_kernels, quantize_edge_features, quantize_node_features, sddmm_add,
    sddmm_dot, segment_softmax, softmax_backward, spmm_edge_scaled, EdgeFeatures, EdgeOperand,
    NodeOperand,
};
use qgnn::tensor::DenseTensor;
use qgnn::toy;

use qgnn_cli::config::{BitsChoice, Model, PrecisionMode, RoundingMode, TrainConfig};
use qgnn_cli::data::{from_dataset, LoadedData};
use qgnn_cli::synth::{generate, SbmParams};
use qgnn_cli::train::{derive_bits, run_train};

/// Prints one pass/fail line per criterion; a panic before `pass` reports
/// the criterion as failed.
struct Criterion {
    number: usize,
    what: &'static str,
    passed: bool,
}

impl Criterion {
    fn start(number: usize, what: &'static str) -> Self {
        Criterion {
            number,
            what,
            passed: false,
        }
    }

    fn pass(mut self) {
        self.passed = true;
        println!("criterion {:>2} PASS: {}", self.number, self.what);
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        if !self.passed {
            println!("criterion {:>2} FAIL: {}", self.number, self.what);
        }
    }
}

fn close(got: f32, want: f32, tol: f32, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} (±{tol})"
    );
}

// ---------------------------------------------------------------- 1 -----

#[test]
fn criterion_01_golden_toy_graph_suite() {
    let c = Criterion::start(1, "golden toy-graph values within ±0.01");
    let tol = 0.01f32;
    let views = toy::toy_views();
    let params = toy::toy_gat_params();
    let mut rng = RngState::from_seed(1);

    // forward chain
    let (out, ctx) = gat_forward(
        &params,
        &views,
        &toy::toy_h_in(),
        Precision::Fp32,
        HeadCombine::Concat,
        6,
        &mut rng,
    )
    .unwrap();
    let s = qgnn::dense::consolidate_heads_f32(&ctx.h_prime, &params.a_src).unwrap();
    close(s.get(0, 0), 1.20, tol, "S[v0] h1");
    close(s.get(0, 1), -0.19, tol, "S[v0] h2");
    close(ctx.scores_pre.scalar(3, 0), 1.40, tol, "E[e3] h1");
    close(ctx.scores_pre.scalar(3, 1), -0.14, tol, "E[e3] h2");
    close(ctx.alpha.scalar(3, 0), 0.63, tol, "alpha[e3] h1");
    close(ctx.alpha.scalar(4, 0), 0.37, tol, "alpha[e4] h1");
    close(ctx.alpha.scalar(3, 1), 0.46, tol, "alpha[e3] h2");
    close(ctx.alpha.scalar(4, 1), 0.54, tol, "alpha[e4] h2");
    for (i, want) in [0.49f32, 0.61, 0.77, -0.58].into_iter().enumerate() {
        close(out.get(3, i), want, tol, "H_out[v3]");
    }

    // backward fragments with reference inputs
    let alpha_unit = EdgeFeatures::constant(views.num_edges(), 2, 1.0);
    let d_h = spmm_edge_scaled(
        &views.csr,
        &alpha_unit,
        NodeOperand::Dense(&toy::toy_d_h_out()),
        plan_kernels(2, 2, 6),
    )
    .unwrap();
    for (i, want) in [1.56f32, 1.57, -0.19, 0.49].into_iter().enumerate() {
        close(d_h.get(1, i), want, tol, "d_h_prime[v1]");
    }

    let d_alpha = sddmm_dot(
        &toy::toy_edges().edges,
        NodeOperand::Dense(&toy::toy_d_h_out()),
        NodeOperand::Dense(&toy::toy_h_prime()),
        2,
    )
    .unwrap();
    close(d_alpha.scalar(0, 0), 0.78, tol, "d_alpha[e0] h1");
    close(d_alpha.scalar(0, 1), -0.13, tol, "d_alpha[e0] h2");

    // softmax backward at v3, head 1
    close(0.80f32 * 0.63 + 0.45 * 0.37, 0.67, tol, "P[v3] h1");
    let e = views.num_edges();
    let mut alpha = EdgeFeatures::constant(e, 1, 1.0);
    alpha.set(0, 0, 0, 0.5);
    alpha.set(1, 0, 0, 0.5);
    alpha.set(3, 0, 0, 0.63);
    alpha.set(4, 0, 0, 0.37);
    let mut d_a = EdgeFeatures::zeros(e, 1, 1);
    d_a.set(3, 0, 0, 0.80);
    d_a.set(4, 0, 0, 0.45);
    let d_scores = softmax_backward(&views.rev_csr, &alpha, &d_a).unwrap();
    close(d_scores.scalar(3, 0), 0.08, tol, "d_scores[e3] h1");

    // incidence aggregations at v3
    let el = toy::toy_edges();
    let mut de = EdgeFeatures::zeros(5, 2, 1);
    de.set(3, 0, 0, 0.08);
    de.set(4, 0, 0, -0.08);
    de.set(4, 1, 0, 0.15);
    let d_dst = incidence_spmm(&build_incidence(&el), EdgeOperand::Dense(&de)).unwrap();
    close(d_dst.get(3, 0), 0.0, tol, "d_dst[v3] h1");
    close(d_dst.get(3, 1), 0.15, tol, "d_dst[v3] h2");
    let d_src =
        incidence_spmm(&build_incidence(&el.transposed()), EdgeOperand::Dense(&de)).unwrap();
    close(d_src.get(3, 0), 0.0, tol, "d_src[v3] h1");
    close(d_src.get(3, 1), 0.0, tol, "d_src[v3] h2");
    c.pass();
}

// ---------------------------------------------------------------- 2 -----

fn preset_data(seed: u64) -> LoadedData {
    let params = SbmParams {
        seed,
        ..SbmParams::preset()
    };
    from_dataset(&generate(&params).unwrap(), seed)
}

fn parity_config(model: Model, precision: PrecisionMode, seed: u64) -> TrainConfig {
    TrainConfig {
        model,
        precision,
        bits: BitsChoice::Fixed(8),
        epochs: match model {
            Model::Gcn => 100,
            Model::Gat => 150,
        },
        lr: match model {
            Model::Gcn => 0.05,
            Model::Gat => 0.1,
        },
        hidden: 64,
        heads: 4,
        seed,
        ..Default::default()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

#[test]
fn criterion_02_accuracy_parity_on_sbm_preset() {
    let c = Criterion::start(
        2,
        "8-bit quantized GCN/GAT reach >= 0.99x the FP32 test accuracy (median of 5 seeds)",
    );
    let data = preset_data(1);
    for model in [Model::Gcn, Model::Gat] {
        let mut fp = Vec::new();
        let mut q = Vec::new();
        for seed in 1..=5u64 {
            let out = run_train(
                &parity_config(model, PrecisionMode::Fp32, seed),
                &data,
                |_| {},
            )
            .unwrap();
            fp.push(out.summary.final_test_acc);
            let out = run_train(
                &parity_config(model, PrecisionMode::Quantized, seed),
                &data,
                |_| {},
            )
            .unwrap();
            q.push(out.summary.final_test_acc);
        }
        let (fp_med, q_med) = (median(fp.clone()), median(q.clone()));
        println!(
            "  {model:?}: fp32 median {fp_med:.4}, quantized median {q_med:.4} (ratio {:.4})",
            q_med / fp_med
        );
        assert!(fp_med >= 0.9, "{model:?} fp32 median {fp_med} below 0.9");
        assert!(
            q_med >= 0.99 * fp_med,
            "{model:?}: quantized median {q_med} below 0.99 x {fp_med}"
        );
    }
    c.pass();
}

// ---------------------------------------------------------------- 3 -----

#[test]
fn criterion_03_bit_selection_behavior() {
    let c = Criterion::start(
        3,
        "bit-selection table non-increasing; grid-snapped features select B <= 6",
    );
    // snap the preset's features to a 6-bit grid with a power-of-two scale
    let params = SbmParams {
        nodes: 600,
        ..SbmParams::preset()
    };
    let mut dataset = generate(&params).unwrap();
    let snapped_bits = 6u8;
    let qmax = (1i32 << (snapped_bits - 1)) - 1;
    let max = dataset.features.max_abs();
    let scale = {
        // smallest power of two with qmax * scale >= max
        let mut s = 1.0f32;
        while (qmax as f32) * s < max {
            s *= 2.0;
        }
        while (qmax as f32) * (s * 0.5) >= max {
            s *= 0.5;
        }
        s
    };
    for v in dataset.features.as_mut_slice() {
        *v = (*v / scale).round().clamp(-(qmax as f32), qmax as f32) * scale;
    }
    // force the extreme onto the grid so the dynamic scale round-trips
    dataset.features.set(0, 0, qmax as f32 * scale);
    let data = from_dataset(&dataset, 3);
    let cfg = TrainConfig {
        model: Model::Gcn,
        precision: PrecisionMode::Quantized,
        bits: BitsChoice::Auto,
        hidden: 64,
        seed: 3,
        ..Default::default()
    };
    let sel = derive_bits(&cfg, &data).unwrap();
    println!("  table: {:?}", sel.table);
    assert_eq!(sel.table.len(), 7);
    for w in sel.table.windows(2) {
        assert!(
            w[1].1 <= w[0].1 + 1e-6,
            "table not non-increasing: {:?} -> {:?}",
            w[0],
            w[1]
        );
    }
    assert!(
        sel.bits <= snapped_bits,
        "selected {} bits on {snapped_bits}-bit-snapped features",
        sel.bits
    );
    // the rule itself on a tensor already sitting on a 6-bit grid
    let sel2 = qgnn::quant::select_bits(&data.features, 0.3, &qgnn::quant::default_candidates())
        .unwrap();
    assert!(sel2.bits <= snapped_bits);
    c.pass();
}

// ---------------------------------------------------------------- 4 -----

#[test]
fn criterion_04_stochastic_rounding_unbiasedness() {
    let c = Criterion::start(4, "mean of 1e5 roundings of 1.25 within ±0.0041");
    let mut rng = RngState::from_seed(4);
    let n = 100_000u32;
    let mut sum = 0i64;
    for _ in 0..n {
        sum += stochastic_round(1.25, &mut rng) as i64;
    }
    let mean = sum as f64 / n as f64;
    println!("  sample mean {mean:.5}");
    assert!(
        (mean - 1.25).abs() <= 0.0041,
        "mean {mean} outside 1.25 ± 0.0041"
    );
    c.pass();
}

// ---------------------------------------------------------------- 5 -----

fn random_graph(rng: &mut RngState, max_nodes: usize) -> EdgeList {
    let v = 2 + (rng.next_u64() as usize) % (max_nodes - 1);
    let mut edges = Vec::new();
    let p = 0.05 + rng.next_unit() * 0.2;
    for s in 0..v {
        for d in 0..v {
            if s != d && rng.next_unit() < p {
                edges.push((s, d));
            }
        }
    }
    augment(&EdgeList::new(v, edges), false, true)
}

#[test]
fn criterion_05_sparse_oracle_equivalence() {
    let c = Criterion::start(
        5,
        "sparse primitives equal dense masked formulations on 200 random graphs (<=1e-5)",
    );
    let mut rng = RngState::from_seed(55);
    let tol = 1e-5f64;
    for trial in 0..200 {
        let el = random_graph(&mut rng, 64);
        let views = GraphViews::build(&el);
        let v = el.num_nodes;
        let e = el.num_edges();
        let heads = 1 + (rng.next_u64() % 3) as usize;
        let dh = 1 + (rng.next_u64() % 4) as usize;
        let feat =
            DenseTensor::from_fn(v, heads * dh, |_, _| (rng.next_unit() * 4.0 - 2.0) as f32);
        let alpha = EdgeFeatures::from_vec(
            e,
            heads,
            1,
            (0..e * heads)
                .map(|_| (rng.next_unit() * 2.0 - 1.0) as f32)
                .collect(),
        )
        .unwrap();

        // edge-scaled aggregation vs dense masked product
        let got = spmm_edge_scaled(
            &views.rev_csr,
            &alpha,
            NodeOperand::Dense(&feat),
            plan_kernels(heads, dh, 6),
        )
        .unwrap();
        for h in 0..heads {
            let mut mask = vec![vec![0.0f64; v]; v];
            for (eid, &(s, d)) in el.edges.iter().enumerate() {
                mask[d][s] += alpha.scalar(eid, h) as f64;
            }
            for dst in 0..v {
                for d in 0..dh {
                    let want: f64 = (0..v)
                        .map(|src| mask[dst][src] * feat.get(src, h * dh + d) as f64)
                        .sum();
                    assert!(
                        (got.get(dst, h * dh + d) as f64 - want).abs() <= tol,
                        "trial {trial} spmm"
                    );
                }
            }
        }

        // incidence aggregation vs the three-operand formulation, exact
        let fe = EdgeFeatures::from_vec(
            e,
            heads,
            1,
            (0..e * heads)
                .map(|_| (rng.next_unit() * 2.0 - 1.0) as f32)
                .collect(),
        )
        .unwrap();
        let got = incidence_spmm(&views.incidence, EdgeOperand::Dense(&fe)).unwrap();
        let mut want = DenseTensor::zeros(v, heads);
        for (eid, &(_, d)) in el.edges.iter().enumerate() {
            for h in 0..heads {
                let cur = want.get(d, h);
                want.set(d, h, cur + fe.scalar(eid, h));
            }
        }
        assert_eq!(got, want, "trial {trial} incidence must be exact");

        // additive and dot-product sampled products vs direct evaluation
        let s = DenseTensor::from_fn(v, heads, |_, _| (rng.next_unit() * 2.0 - 1.0) as f32);
        let d = DenseTensor::from_fn(v, heads, |_, _| (rng.next_unit() * 2.0 - 1.0) as f32);
        let add = sddmm_add(&el.edges, NodeOperand::Dense(&s), NodeOperand::Dense(&d)).unwrap();
        let dot = sddmm_dot(
            &el.edges,
            NodeOperand::Dense(&feat),
            NodeOperand::Dense(&feat),
            heads,
        )
        .unwrap();
        for (eid, &(u, w)) in el.edges.iter().enumerate() {
            for h in 0..heads {
                let want = s.get(u, h) as f64 + d.get(w, h) as f64;
                assert!((add.scalar(eid, h) as f64 - want).abs() <= tol, "sddmm add");
                let want: f64 = (0..dh)
                    .map(|k| feat.get(w, h * dh + k) as f64 * feat.get(u, h * dh + k) as f64)
                    .sum();
                assert!((dot.scalar(eid, h) as f64 - want).abs() <= tol, "sddmm dot");
            }
        }

        // segment softmax and its backward vs the dense per-segment oracle
        let scores = EdgeFeatures::from_vec(
            e,
            heads,
            1,
            (0..e * heads)
                .map(|_| (rng.next_unit() * 4.0 - 2.0) as f32)
                .collect(),
        )
        .unwrap();
        let (alpha2, _) = segment_softmax(&views.rev_csr, &scores).unwrap();
        let d_alpha = EdgeFeatures::from_vec(
            e,
            heads,
            1,
            (0..e * heads)
                .map(|_| (rng.next_unit() * 2.0 - 1.0) as f32)
                .collect(),
        )
        .unwrap();
        let back = softmax_backward(&views.rev_csr, &alpha2, &d_alpha).unwrap();
        for node in 0..v {
            let seg: Vec<usize> = el
                .edges
                .iter()
                .enumerate()
                .filter(|(_, &(_, d))| d == node)
                .map(|(eid, _)| eid)
                .collect();
            for h in 0..heads {
                let denom: f64 = seg
                    .iter()
                    .map(|&eid| (scores.scalar(eid, h) as f64).exp())
                    .sum();
                for &eid in &seg {
                    let want = (scores.scalar(eid, h) as f64).exp() / denom;
                    assert!(
                        (alpha2.scalar(eid, h) as f64 - want).abs() <= tol,
                        "softmax"
                    );
                }
                for &j in &seg {
                    let mut want = 0.0f64;
                    for &i in &seg {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        want += d_alpha.scalar(i, h) as f64
                            * alpha2.scalar(i, h) as f64
                            * (delta - alpha2.scalar(j, h) as f64);
                    }
                    assert!(
                        (back.scalar(j, h) as f64 - want).abs() <= tol,
                        "softmax backward"
                    );
                }
            }
        }
    }
    c.pass();
}

// ---------------------------------------------------------------- 6 -----

fn fd_tensor(mut eval: impl FnMut(&DenseTensor) -> f64, base: &DenseTensor, h: f32) -> DenseTensor {
    let mut out = DenseTensor::zeros(base.rows(), base.cols());
    for r in 0..base.rows() {
        for c in 0..base.cols() {
            let orig = base.get(r, c);
            let mut plus = base.clone();
            plus.set(r, c, orig + h);
            let lp = eval(&plus);
            let mut minus = base.clone();
            minus.set(r, c, orig - h);
            let lm = eval(&minus);
            out.set(r, c, ((lp - lm) / (2.0 * h as f64)) as f32);
        }
    }
    out
}

fn max_rel_err(analytic: &DenseTensor, fd: &DenseTensor) -> f64 {
    let scale = analytic.max_abs().max(fd.max_abs()).max(0.02) as f64;
    analytic
        .as_slice()
        .iter()
        .zip(fd.as_slice())
        .map(|(a, b)| ((a - b).abs() as f64) / scale)
        .fold(0.0, f64::max)
}

#[test]
fn criterion_06_gradient_checks() {
    let c = Criterion::start(
        6,
        "GAT and GCN gradients match central differences (rel err <= 1e-3, 20 seeds)",
    );
    let h = 1e-3f32;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        // GAT fixture, redrawn until pre-activation scores clear the
        // activation kink (central differences are invalid across it)
        let mut chosen = None;
        for attempt in 0..50u64 {
            let mut rng = RngState::from_seed(6_000 + seed * 131 + attempt);
            let v = 4 + (rng.next_u64() as usize) % 10;
            let mut edges = Vec::new();
            for s in 0..v {
                for d in 0..v {
                    if s != d && rng.next_unit() < 0.25 {
                        edges.push((s, d));
                    }
                }
            }
            let el = augment(&EdgeList::new(v, edges), true, true);
            let views = GraphViews::build(&el);
            let params = GatLayerParams {
                w: DenseTensor::from_fn(3, 4, |_, _| (rng.next_unit() * 1.6 - 0.8) as f32),
                a_src: DenseTensor::from_fn(2, 2, |_, _| (rng.next_unit() * 1.6 - 0.8) as f32),
                a_dst: DenseTensor::from_fn(2, 2, |_, _| (rng.next_unit() * 1.6 - 0.8) as f32),
                leaky_slope: 0.2,
            };
            let h_in =
                DenseTensor::from_fn(v, 3, |_, _| (rng.next_unit() * 2.0 - 1.0) as f32);
            let labels: Vec<usize> = (0..v).map(|_| (rng.next_u64() % 4) as usize).collect();
            let mut r = RngState::from_seed(0);
            let (_, ctx) = gat_forward(
                &params,
                &views,
                &h_in,
                Precision::Fp32,
                HeadCombine::Concat,
                6,
                &mut r,
            )
            .unwrap();
            let min_abs = ctx
                .scores_pre
                .as_slice()
                .iter()
                .fold(f32::INFINITY, |m, &x| m.min(x.abs()));
            if min_abs > 0.008 {
                chosen = Some((views, params, h_in, labels));
                break;
            }
        }
        let (views, params, h_in, labels) = chosen.expect("kink-free fixture");
        let loss_with = |p: &GatLayerParams, x: &DenseTensor| -> f64 {
            let mut r = RngState::from_seed(0);
            let (out, _) = gat_forward(
                p,
                &views,
                x,
                Precision::Fp32,
                HeadCombine::Concat,
                6,
                &mut r,
            )
            .unwrap();
            cross_entropy(&out, &labels).unwrap().0
        };
        let mut r = RngState::from_seed(0);
        let (out, mut ctx) = gat_forward(
            &params,
            &views,
            &h_in,
            Precision::Fp32,
            HeadCombine::Concat,
            6,
            &mut r,
        )
        .unwrap();
        let (_, d_logits) = cross_entropy(&out, &labels).unwrap();
        let grads = gat_backward(&params, &views, &mut ctx, &d_logits, &mut r).unwrap();
        let checks = [
            (
                "w",
                &grads.d_w,
                fd_tensor(
                    |w| {
                        let mut p = params.clone();
                        p.w = w.clone();
                        loss_with(&p, &h_in)
                    },
                    &params.w,
                    h,
                ),
            ),
            (
                "a_src",
                &grads.d_a_src,
                fd_tensor(
                    |a| {
                        let mut p = params.clone();
                        p.a_src = a.clone();
                        loss_with(&p, &h_in)
                    },
                    &params.a_src,
                    h,
                ),
            ),
            (
                "a_dst",
                &grads.d_a_dst,
                fd_tensor(
                    |a| {
                        let mut p = params.clone();
                        p.a_dst = a.clone();
                        loss_with(&p, &h_in)
                    },
                    &params.a_dst,
                    h,
                ),
            ),
            (
                "h_in",
                &grads.d_h_in,
                fd_tensor(|x| loss_with(&params, x), &h_in, h),
            ),
        ];
        for (name, analytic, fd) in checks {
            let err = max_rel_err(analytic, &fd);
            worst = worst.max(err);
            assert!(err <= 1e-3, "gat seed {seed} {name}: rel err {err}");
        }

        // GCN on the same style of fixture
        let mut rng = RngState::from_seed(6_500 + seed);
        let v = 4 + (rng.next_u64() as usize) % 10;
        let mut edges = Vec::new();
        for s in 0..v {
            for d in 0..v {
                if s != d && rng.next_unit() < 0.3 {
                    edges.push((s, d));
                }
            }
        }
        let el = augment(&EdgeList::new(v, edges), true, true);
        let views = GraphViews::build(&el);
        let norm = EdgeFeatures::from_vec(el.num_edges(), 1, 1, gcn_norm(&el).unwrap()).unwrap();
        let params = GcnLayerParams {
            w: DenseTensor::from_fn(3, 4, |_, _| (rng.next_unit() * 1.6 - 0.8) as f32),
        };
        let h_in = DenseTensor::from_fn(v, 3, |_, _| (rng.next_unit() * 2.0 - 1.0) as f32);
        let labels: Vec<usize> = (0..v).map(|_| (rng.next_u64() % 4) as usize).collect();
        let loss_with = |p: &GcnLayerParams, x: &DenseTensor| -> f64 {
            let mut r = RngState::from_seed(0);
            let (out, _) = gcn_forward(p, &views, &norm, x, Precision::Fp32, 6, &mut r).unwrap();
            cross_entropy(&out, &labels).unwrap().0
        };
        let mut r = RngState::from_seed(0);
        let (out, mut ctx) =
            gcn_forward(&params, &views, &norm, &h_in, Precision::Fp32, 6, &mut r).unwrap();
        let (_, d_logits) = cross_entropy(&out, &labels).unwrap();
        let grads = gcn_backward(&params, &views, &norm, &mut ctx, &d_logits, &mut r).unwrap();
        let fd_w = fd_tensor(
            |w| loss_with(&GcnLayerParams { w: w.clone() }, &h_in),
            &params.w,
            h,
        );
        let fd_h = fd_tensor(|x| loss_with(&params, x), &h_in, h);
        for (name, analytic, fd) in [("w", &grads.d_w, fd_w), ("h_in", &grads.d_h_in, fd_h)] {
            let err = max_rel_err(analytic, &fd);
            worst = worst.max(err);
            assert!(err <= 1e-3, "gcn seed {seed} {name}: rel err {err}");
        }
    }
    println!("  worst relative error {worst:.2e}");
    c.pass();
}

// ---------------------------------------------------------------- 7 -----

#[test]
fn criterion_07_quantization_reuse_accounting() {
    let c = Criterion::start(
        7,
        "per-step quantize calls equal the reuse plan's prediction and caching strictly reduces them",
    );
    let gat_plan = plan_quant_reuse(&gat_layer_graph()).unwrap();
    let gcn_plan = plan_quant_reuse(&gcn_layer_graph()).unwrap();
    // the shared tensors are quantized once, not at both of their sites
    for (plan, tensors) in [
        (&gat_plan, vec!["h_in", "w", "d_h_out"]),
        (&gcn_plan, vec!["h_in", "w"]),
    ] {
        for t in tensors {
            let entry = plan.entry(t).unwrap();
            assert!(entry.quantize_once, "{t} must be quantize-once");
            assert_eq!(entry.consumers.len(), 2, "{t} has two consumer sites");
        }
    }

    // instrumented single-layer training steps must match the predictions
    let el = augment(
        &EdgeList::new(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]),
        true,
        true,
    );
    let views = GraphViews::build(&el);
    let norm = EdgeFeatures::from_vec(el.num_edges(), 1, 1, gcn_norm(&el).unwrap()).unwrap();
    let h_in = DenseTensor::from_fn(6, 4, |i, j| ((i * 4 + j) % 7) as f32 * 0.23 - 0.6);
    let d_out4 = DenseTensor::from_fn(6, 4, |i, j| ((i + j) % 5) as f32 * 0.3 - 0.5);

    for reuse in [true, false] {
        let spec = QuantSpec {
            bits: 8,
            rounding: Rounding::Stochastic,
            reuse,
        };
        // GAT step
        let params = GatLayerParams {
            w: DenseTensor::from_fn(4, 4, |i, j| (i as f32 - j as f32) * 0.2 + 0.1),
            a_src: DenseTensor::from_fn(2, 2, |i, j| 0.2 + 0.1 * (i + j) as f32),
            a_dst: DenseTensor::from_fn(2, 2, |i, j| 0.1 - 0.2 * (i as f32 - j as f32)),
            leaky_slope: 0.2,
        };
        let mut rng = RngState::from_seed(7);
        counters::reset();
        let (_, mut ctx) = gat_forward(
            &params,
            &views,
            &h_in,
            Precision::Quantized(spec),
            HeadCombine::Concat,
            6,
            &mut rng,
        )
        .unwrap();
        gat_backward(&params, &views, &mut ctx, &d_out4, &mut rng).unwrap();
        let snap = counters::snapshot();
        assert_eq!(
            snap.quantize_calls as usize,
            gat_plan.predicted_quantize_calls(reuse),
            "gat reuse={reuse}"
        );

        // GCN step
        let params = GcnLayerParams {
            w: DenseTensor::from_fn(4, 4, |i, j| 0.15 * (i + 1) as f32 - 0.1 * j as f32),
        };
        let mut rng = RngState::from_seed(8);
        counters::reset();
        let (_, mut ctx) = gcn_forward(
            &params,
            &views,
            &norm,
            &h_in,
            Precision::Quantized(spec),
            6,
            &mut rng,
        )
        .unwrap();
        gcn_backward(&params, &views, &norm, &mut ctx, &d_out4, &mut rng).unwrap();
        let snap = counters::snapshot();
        assert_eq!(
            snap.quantize_calls as usize,
            gcn_plan.predicted_quantize_calls(reuse),
            "gcn reuse={reuse}"
        );
    }
    assert!(
        gat_plan.predicted_quantize_calls(true) < gat_plan.predicted_quantize_calls(false)
    );
    assert!(
        gcn_plan.predicted_quantize_calls(true) < gcn_plan.predicted_quantize_calls(false)
    );
    println!(
        "  gat: {} calls cached vs {} uncached; gcn: {} vs {}",
        gat_plan.predicted_quantize_calls(true),
        gat_plan.predicted_quantize_calls(false),
        gcn_plan.predicted_quantize_calls(true),
        gcn_plan.predicted_quantize_calls(false)
    );
    c.pass();
}

// ---------------------------------------------------------------- 8 -----

#[test]
fn criterion_08_quantized_gemm_integrity() {
    let c = Criterion::start(
        8,
        "dequantized product equals s_a*s_b*(int32 product) bit-for-bit; 8-bit dot overflows into int32",
    );
    // the reference integer fragment: an 8-bit row/column dot far outside
    // the 8-bit range, exact in the int32 accumulator
    let row = [1i8, 58, 101, 28];
    let col = [-104i8, 12, 85, 93];
    let acc: i32 = row
        .iter()
        .zip(col.iter())
        .map(|(&a, &b)| a as i32 * b as i32)
        .sum();
    assert_eq!(acc, 11781);
    assert!(acc > 127, "dot exceeds the 8-bit range");
    let a_q = QuantizedTensor::from_parts(
        1,
        4,
        row.to_vec(),
        QuantParams {
            bits: 8,
            scale: 1.0,
        },
    )
    .unwrap();
    let b_q = QuantizedTensor::from_parts(
        4,
        1,
        col.to_vec(),
        QuantParams {
            bits: 8,
            scale: 1.0,
        },
    )
    .unwrap();
    let mut rng = RngState::from_seed(0);
    let r = qgnn::dense::qgemm_with_cached(
        GemmOperand::Quantized(&a_q),
        GemmOperand::Quantized(&b_q),
        QuantSpec::new(8),
        &mut rng,
    )
    .unwrap();
    assert_eq!(r.c.get(0, 0), 11781.0);

    // bit-for-bit identity on random matrices via a widening i64 oracle
    let a = DenseTensor::from_fn(40, 24, |i, j| ((i * 7 + j * 3) % 31) as f32 * 0.33 - 4.0);
    let b = DenseTensor::from_fn(24, 36, |i, j| ((i * 5 + j * 11) % 29) as f32 * 0.21 - 3.0);
    let r = qgemm(&a, &b, QuantSpec::new(8), &mut rng).unwrap();
    let (aq, bq) = (r.a_q.as_ref().unwrap(), r.b_q.as_ref().unwrap());
    let s = aq.scale() * bq.scale();
    for i in 0..40 {
        for j in 0..36 {
            let mut acc = 0i64;
            for k in 0..24 {
                acc += aq.get(i, k) as i64 * bq.get(k, j) as i64;
            }
            assert!(acc.abs() <= i32::MAX as i64, "int32 accumulator wrapped");
            assert_eq!(
                r.c.get(i, j).to_bits(),
                (s * acc as f32).to_bits(),
                "dequantized product must be exact at ({i},{j})"
            );
        }
    }
    c.pass();
}

// ---------------------------------------------------------------- 9 -----

#[test]
fn criterion_09_byte_traffic_is_exactly_one_quarter() {
    let c = Criterion::start(
        9,
        "quantized sparse sweeps random-access exactly 25% of the FP32 feature bytes",
    );
    let el = augment(
        &EdgeList::new(30, (0..29).map(|i| (i, i + 1)).collect()),
        true,
        true,
    );
    let views = GraphViews::build(&el);
    let e = el.num_edges();
    let (heads, dh) = (2usize, 8usize);
    let feat = DenseTensor::from_fn(30, heads * dh, |i, j| ((i + j) % 9) as f32 * 0.2 - 0.8);
    let scal = DenseTensor::from_fn(30, heads, |i, j| ((i * 3 + j) % 7) as f32 * 0.1 - 0.3);
    let efeat = EdgeFeatures::from_vec(
        e,
        heads,
        1,
        (0..e * heads).map(|t| (t % 11) as f32 * 0.1 - 0.5).collect(),
    )
    .unwrap();
    let alpha = EdgeFeatures::constant(e, heads, 0.3);
    let spec = QuantSpec::new(8);
    let mut rng = RngState::from_seed(9);
    let feat_q = quantize_node_features(&feat, spec, &mut rng).unwrap();
    let scal_q = quantize_node_features(&scal, spec, &mut rng).unwrap();
    let efeat_q = quantize_edge_features(&efeat, spec, &mut rng).unwrap();
    let plan = plan_kernels(heads, dh, 6);

    let measure = |f: &mut dyn FnMut()| -> u64 {
        counters::reset();
        f();
        counters::snapshot().feature_bytes
    };
    let cases: Vec<(&str, u64, u64)> = vec![
        (
            "spmm",
            measure(&mut || {
                spmm_edge_scaled(&views.rev_csr, &alpha, NodeOperand::Dense(&feat), plan)
                    .unwrap();
            }),
            measure(&mut || {
                spmm_edge_scaled(&views.rev_csr, &alpha, NodeOperand::Quantized(&feat_q), plan)
                    .unwrap();
            }),
        ),
        (
            "sddmm_add",
            measure(&mut || {
                sddmm_add(&el.edges, NodeOperand::Dense(&scal), NodeOperand::Dense(&scal))
                    .unwrap();
            }),
            measure(&mut || {
                sddmm_add(
                    &el.edges,
                    NodeOperand::Quantized(&scal_q),
                    NodeOperand::Quantized(&scal_q),
                )
                .unwrap();
            }),
        ),
        (
            "sddmm_dot",
            measure(&mut || {
                sddmm_dot(
                    &el.edges,
                    NodeOperand::Dense(&feat),
                    NodeOperand::Dense(&feat),
                    heads,
                )
                .unwrap();
            }),
            measure(&mut || {
                sddmm_dot(
                    &el.edges,
                    NodeOperand::Quantized(&feat_q),
                    NodeOperand::Quantized(&feat_q),
                    heads,
                )
                .unwrap();
            }),
        ),
        (
            "incidence_spmm",
            measure(&mut || {
                incidence_spmm(&views.incidence, EdgeOperand::Dense(&efeat)).unwrap();
            }),
            measure(&mut || {
                incidence_spmm(&views.incidence, EdgeOperand::Quantized(&efeat_q)).unwrap();
            }),
        ),
    ];
    for (name, fp, q) in cases {
        assert!(fp > 0, "{name} counted no fp32 bytes");
        assert_eq!(4 * q, fp, "{name}: {q} quantized vs {fp} fp32 bytes");
        println!("  {name}: {fp} fp32 bytes vs {q} quantized (ratio 0.25)");
    }
    c.pass();
}

// --------------------------------------------------------------- 10 -----

#[test]
fn criterion_10_ablation_fidelity() {
    let c = Criterion::start(
        10,
        "ablations touch only their call sites; nearest rounding trains less stably",
    );
    // small dataset for the instrumented part
    let small = from_dataset(
        &generate(&SbmParams {
            nodes: 120,
            classes: 3,
            intra_p: 0.15,
            inter_p: 0.01,
            feature_dim: 8,
            noise: 1.0,
            seed: 10,
        })
        .unwrap(),
        10,
    );
    let gat_plan = plan_quant_reuse(&gat_layer_graph()).unwrap();
    let gcn_plan = plan_quant_reuse(&gcn_layer_graph()).unwrap();
    let base = TrainConfig {
        model: Model::Gcn,
        precision: PrecisionMode::Quantized,
        bits: BitsChoice::Fixed(8),
        epochs: 2,
        hidden: 16,
        heads: 2,
        lr: 0.05,
        seed: 3,
        ..Default::default()
    };
    for (model, plan) in [(Model::Gcn, &gcn_plan), (Model::Gat, &gat_plan)] {
        let per_layer = plan.predicted_quantize_calls(true) as u64;
        let cfg = TrainConfig {
            model,
            ..base.clone()
        };
        let out = run_train(&cfg, &small, |_| {}).unwrap();
        for r in &out.records {
            // the layer before the loss stays full precision: per-step
            // calls equal exactly one quantized layer's prediction
            assert_eq!(r.quantize_calls, per_layer, "{model:?} without ablation");
            assert!(r.rng_draws > 0);
        }
        let cfg = TrainConfig {
            model,
            quantize_last: true,
            ..base.clone()
        };
        let out = run_train(&cfg, &small, |_| {}).unwrap();
        for r in &out.records {
            // quantizing the final layer adds exactly that layer's sites
            assert_eq!(
                r.quantize_calls,
                2 * per_layer,
                "{model:?} with quantize-last"
            );
        }
        let cfg = TrainConfig {
            model,
            rounding: RoundingMode::Nearest,
            ..base.clone()
        };
        let out = run_train(&cfg, &small, |_| {}).unwrap();
        for r in &out.records {
            // nearest rounding changes only the rounding rule: same call
            // count, zero randomness consumed
            assert_eq!(r.quantize_calls, per_layer, "{model:?} nearest calls");
            assert_eq!(r.rng_draws, 0, "{model:?} nearest must not draw");
        }
    }

    // directional instability check: 2-bit GAT on the preset, 5 seeds
    let data = preset_data(1);
    let variance = |rounding: RoundingMode, seed: u64| -> f64 {
        let cfg = TrainConfig {
            model: Model::Gat,
            precision: PrecisionMode::Quantized,
            bits: BitsChoice::Fixed(2),
            rounding,
            epochs: 100,
            hidden: 64,
            heads: 4,
            lr: 0.1,
            seed,
            ..Default::default()
        };
        let out = run_train(&cfg, &data, |_| {}).unwrap();
        let accs: Vec<f64> = out.records.iter().map(|r| r.val_acc).collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64
    };
    let mut stochastic = Vec::new();
    let mut nearest = Vec::new();
    for seed in 1..=5u64 {
        stochastic.push(variance(RoundingMode::Stochastic, seed));
        nearest.push(variance(RoundingMode::Nearest, seed));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (ms, mn) = (mean(&stochastic), mean(&nearest));
    println!(
        "  epoch-accuracy variance at 2 bits: stochastic {ms:.3e}, nearest {mn:.3e}"
    );
    assert!(
        mn > ms,
        "nearest-rounding variance {mn} not above stochastic {ms}"
    );
    c.pass();
}
