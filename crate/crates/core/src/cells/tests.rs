use super::*;
use crate::numerics::RngStream;

fn random(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.normal(std))
}

fn random_plain(rng: &mut RngStream, d: usize, h: usize, surrogate: bool) -> PlainCellParams<f64> {
    PlainCellParams::new(
        random(rng, d, h, 0.5),
        random(rng, h, h, 0.5),
        random(rng, 1, h, 0.5),
        surrogate,
    )
    .unwrap()
}

fn random_cell(arch: Arch, rng: &mut RngStream, d: usize, h: usize) -> CellParams<f64> {
    let mut p = CellParams::zeros(&CellConfig::new(arch, d, h));
    for (_, m) in p.blocks_mut() {
        *m = random(rng, m.rows(), m.cols(), 0.5);
    }
    p
}

// Scalar-loop oracles, written against the formulas entry by entry.

fn oracle_pre(w: &Matrix<f64>, u: &Matrix<f64>, b: &Matrix<f64>, x: &Matrix<f64>, h: &Matrix<f64>, identity: bool) -> Vec<Vec<f64>> {
    let (bsz, hd, d) = (x.rows(), u.cols(), x.cols());
    let mut out = vec![vec![0.0; hd]; bsz];
    for r in 0..bsz {
        for j in 0..hd {
            let mut acc = b.get(0, j);
            for k in 0..d {
                acc += x.get(r, k) * w.get(k, j);
            }
            for k in 0..hd {
                let ukj = u.get(k, j) + if identity && k == j { 1.0 } else { 0.0 };
                acc += h.get(r, k) * ukj;
            }
            out[r][j] = acc;
        }
    }
    out
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn oracle_relu_step(p: &PlainCellParams<f64>, x: &Matrix<f64>, h: &Matrix<f64>) -> Matrix<f64> {
    let z = oracle_pre(&p.w, &p.u, &p.b, x, h, p.identity_surrogate);
    Matrix::from_rows(&z.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn rin_zero_weights_is_identity_on_nonnegative_state() {
    let p = PlainCellParams::<f64>::zeros(3, 4, true);
    let h_prev = Matrix::from_rows(&[[0.0, 1.5, 2.0, 0.25], [3.0, 0.0, 0.5, 7.0]]).unwrap();
    let x = Matrix::from_fn(2, 3, |r, c| (r + c) as f64 - 1.0);
    assert_eq!(rin_step(&p, &x, &h_prev).unwrap().h, h_prev);
}

#[test]
fn rin_zero_weights_rectifies_negative_state() {
    let p = PlainCellParams::<f64>::zeros(3, 4, true);
    let h_prev = Matrix::from_rows(&[[-1.0, 1.5, -2.0, 0.25]]).unwrap();
    let x = Matrix::zeros(1, 3);
    let got = rin_step(&p, &x, &h_prev).unwrap().h;
    assert_eq!(got, Matrix::from_rows(&[[0.0, 1.5, 0.0, 0.25]]).unwrap());
}

#[test]
fn rin_rejects_missing_surrogate_and_bad_shapes() {
    let p = PlainCellParams::<f64>::zeros(3, 4, false);
    assert!(matches!(rin_step(&p, &Matrix::zeros(2, 3), &Matrix::zeros(2, 4)), Err(Error::Config(_))));
    let p = PlainCellParams::<f64>::zeros(3, 4, true);
    assert!(matches!(rin_step(&p, &Matrix::zeros(2, 2), &Matrix::zeros(2, 4)), Err(Error::Shape { .. })));
    assert!(matches!(rin_step(&p, &Matrix::zeros(2, 3), &Matrix::zeros(3, 4)), Err(Error::Shape { .. })));
}

#[test]
fn rin_and_irnn_match_scalar_oracle() {
    let mut rng = RngStream::new(11);
    for surrogate in [true, false] {
        let p = random_plain(&mut rng, 3, 4, surrogate);
        let x = random(&mut rng, 2, 3, 1.0);
        let h = random(&mut rng, 2, 4, 1.0).map(f64::abs);
        let got = if surrogate { rin_step(&p, &x, &h) } else { irnn_step(&p, &x, &h) }.unwrap();
        assert!(got.h.max_abs_diff(&oracle_relu_step(&p, &x, &h)) < 1e-12);
        assert!(got.h.as_slice().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn irnn_with_identity_recurrence_copies_state() {
    let p = PlainCellParams::new(Matrix::zeros(2, 3), Matrix::identity(3), Matrix::zeros(1, 3), false).unwrap();
    let h = Matrix::from_rows(&[[0.5, 0.0, 4.0]]).unwrap();
    assert_eq!(irnn_step(&p, &Matrix::ones(1, 2), &h).unwrap().h, h);
}

#[test]
fn rin_equals_irnn_with_shifted_recurrence_bitwise() {
    let mut rng = RngStream::new(5);
    for _ in 0..20 {
        let rin = random_plain(&mut rng, 3, 4, true);
        let irnn = PlainCellParams {
            u: rin.effective_recurrent().into_owned(),
            identity_surrogate: false,
            ..rin.clone()
        };
        let x = random(&mut rng, 2, 3, 1.0);
        let h = random(&mut rng, 2, 4, 1.0);
        assert_eq!(rin_step(&rin, &x, &h).unwrap(), irnn_step(&irnn, &x, &h).unwrap());
    }
}

fn oracle_lstm(p: &LstmCellParams<f64>, x: &Matrix<f64>, h: &Matrix<f64>, c: &Matrix<f64>) -> (Matrix<f64>, Matrix<f64>) {
    let zi = oracle_pre(&p.input.w, &p.input.u, &p.input.b, x, h, false);
    let zf = oracle_pre(&p.forget.w, &p.forget.u, &p.forget.b, x, h, false);
    let zg = oracle_pre(&p.candidate.w, &p.candidate.u, &p.candidate.b, x, h, false);
    let zo = oracle_pre(&p.output.w, &p.output.u, &p.output.b, x, h, false);
    let mut c_new = Matrix::zeros_like(c);
    let mut h_new = Matrix::zeros_like(h);
    for r in 0..h.rows() {
        for j in 0..h.cols() {
            let cv = sig(zf[r][j]) * c.get(r, j) + sig(zi[r][j]) * zg[r][j].tanh();
            c_new.set(r, j, cv);
            h_new.set(r, j, sig(zo[r][j]) * cv.tanh());
        }
    }
    (h_new, c_new)
}

fn lstm_params(cell: CellParams<f64>) -> LstmCellParams<f64> {
    match cell {
        CellParams::Lstm(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn lstm_zero_everything_gives_zero_state() {
    let p = LstmCellParams::<f64>::zeros(3, 4);
    let prev = CellState {
        h: Matrix::zeros(2, 4),
        c: Some(Matrix::zeros(2, 4)),
    };
    let next = lstm_step(&p, &Matrix::ones(2, 3), &prev).unwrap();
    assert_eq!(next.h, Matrix::zeros(2, 4));
    assert_eq!(next.c.unwrap(), Matrix::zeros(2, 4));
}

#[test]
fn lstm_saturated_forget_gate_accumulates() {
    let mut rng = RngStream::new(3);
    let mut p = lstm_params(random_cell(Arch::Lstm, &mut rng, 3, 4));
    p.forget.w.fill(0.0);
    p.forget.u.fill(0.0);
    p.forget.b.fill(100.0);
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let c = random(&mut rng, 2, 4, 1.0);
    let next = lstm_step(&p, &x, &CellState { h: h.clone(), c: Some(c.clone()) }).unwrap();
    let zi = oracle_pre(&p.input.w, &p.input.u, &p.input.b, &x, &h, false);
    let zg = oracle_pre(&p.candidate.w, &p.candidate.u, &p.candidate.b, &x, &h, false);
    let next_c = next.c.unwrap();
    for r in 0..2 {
        for j in 0..4 {
            let want = c.get(r, j) + sig(zi[r][j]) * zg[r][j].tanh();
            assert!((next_c.get(r, j) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn lstm_matches_scalar_oracle_and_requires_cell_state() {
    let mut rng = RngStream::new(8);
    let p = lstm_params(random_cell(Arch::Lstm, &mut rng, 3, 4));
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let c = random(&mut rng, 2, 4, 1.0);
    let next = lstm_step(&p, &x, &CellState { h: h.clone(), c: Some(c.clone()) }).unwrap();
    let (want_h, want_c) = oracle_lstm(&p, &x, &h, &c);
    assert!(next.h.max_abs_diff(&want_h) < 1e-12);
    assert!(next.c.unwrap().max_abs_diff(&want_c) < 1e-12);
    let err = lstm_step(&p, &x, &CellState { h, c: None }).unwrap_err();
    assert!(matches!(err, Error::State(_)));
}

fn gated_params(cell: CellParams<f64>) -> GatedCellParams<f64> {
    match cell {
        CellParams::Gated(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn gated_forced_plain_subcase_equals_transform() {
    let mut rng = RngStream::new(21);
    let p = gated_params(random_cell(Arch::Gated, &mut rng, 3, 4));
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let forced = GateOverride {
        transform_gate: Some(1.0),
        carry_gate: Some(0.0),
    };
    let (state, gates) = gated_step_forced(&p, &x, &h, forced).unwrap();
    let z = oracle_pre(&p.transform.params.w, &p.transform.params.u, &p.transform.params.b, &x, &h, false);
    let direct = Matrix::from_fn(2, 4, |r, c| z[r][c].tanh());
    assert_eq!(state.h, gates.transform);
    assert!(state.h.max_abs_diff(&direct) < 1e-15);
}

#[test]
fn gated_forced_pure_carry_keeps_state() {
    let mut rng = RngStream::new(22);
    let p = gated_params(random_cell(Arch::Gated, &mut rng, 3, 4));
    let h = random(&mut rng, 2, 4, 1.0);
    let forced = GateOverride {
        transform_gate: Some(0.0),
        carry_gate: Some(1.0),
    };
    let (state, _) = gated_step_forced(&p, &random(&mut rng, 2, 3, 1.0), &h, forced).unwrap();
    assert_eq!(state.h, h);
}

#[test]
fn gated_matches_direct_evaluation() {
    let mut rng = RngStream::new(23);
    let p = gated_params(random_cell(Arch::Gated, &mut rng, 3, 4));
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let (state, gates) = gated_step(&p, &x, &h).unwrap();
    let zs = oracle_pre(&p.transform.params.w, &p.transform.params.u, &p.transform.params.b, &x, &h, false);
    let zt = oracle_pre(&p.transform_gate.params.w, &p.transform_gate.params.u, &p.transform_gate.params.b, &x, &h, false);
    let zc = oracle_pre(&p.carry_gate.params.w, &p.carry_gate.params.u, &p.carry_gate.params.b, &x, &h, false);
    for r in 0..2 {
        for j in 0..4 {
            let (hh, tt, cc) = (zs[r][j].tanh(), sig(zt[r][j]), sig(zc[r][j]));
            assert!((state.h.get(r, j) - (hh * tt + h.get(r, j) * cc)).abs() < 1e-12);
            assert!((gates.carry_gate.get(r, j) - cc).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&gates.transform_gate.get(r, j)));
        }
    }
}

#[test]
fn gated_rejects_non_sigmoid_gates() {
    let mut p = GatedCellParams::<f64>::zeros(2, 2, Activation::Tanh);
    p.carry_gate.activation = Activation::Relu;
    assert!(matches!(
        gated_step(&p, &Matrix::zeros(1, 2), &Matrix::zeros(1, 2)),
        Err(Error::Config(_))
    ));
}

fn deep_params(cell: CellParams<f64>) -> DeepTransitionParams<f64> {
    match cell {
        CellParams::RinDt(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn rin_dt_zero_weights_preserve_state() {
    let p = DeepTransitionParams::<f64>::zeros(3, 4);
    let h = Matrix::from_rows(&[[0.0, 2.0, 1.0, 0.5]]).unwrap();
    assert_eq!(rin_dt_step(&p, &Matrix::ones(1, 3), &h).unwrap().h, h);
}

#[test]
fn rin_dt_with_trivial_second_stage_is_rin() {
    let mut rng = RngStream::new(31);
    let mut p = deep_params(random_cell(Arch::RinDt, &mut rng, 3, 4));
    p.u2.fill(0.0);
    p.b2.fill(0.0);
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let stage1 = rin_step(&p.stage1, &x, &h).unwrap().h;
    assert_eq!(rin_dt_step(&p, &x, &h).unwrap().h, stage1);
}

#[test]
fn rin_dt_matches_composed_oracle() {
    let mut rng = RngStream::new(32);
    let p = deep_params(random_cell(Arch::RinDt, &mut rng, 3, 4));
    let x = random(&mut rng, 2, 3, 1.0);
    let h = random(&mut rng, 2, 4, 1.0);
    let mid = oracle_relu_step(&p.stage1, &x, &h);
    let second = PlainCellParams {
        w: Matrix::zeros(1, 4),
        u: p.u2.clone(),
        b: p.b2.clone(),
        identity_surrogate: true,
    };
    let want = oracle_relu_step(&second, &Matrix::zeros(2, 1), &mid);
    assert!(rin_dt_step(&p, &x, &h).unwrap().h.max_abs_diff(&want) < 1e-12);
}

// Per-step finite-difference checks against the loss L = sum(h ⊙ R) (+ sum(c ⊙ Rc)).

struct StepProblem {
    x: Matrix<f64>,
    state: CellState<f64>,
    rh: Matrix<f64>,
    rc: Option<Matrix<f64>>,
}

fn step_loss(cell: &CellParams<f64>, pr: &StepProblem, x: &Matrix<f64>, state: &CellState<f64>) -> f64 {
    let (next, _) = cell.prepare().forward(x, state).unwrap();
    let mut l: f64 = next.h.as_slice().iter().zip(pr.rh.as_slice()).map(|(a, b)| a * b).sum();
    if let (Some(c), Some(rc)) = (&next.c, &pr.rc) {
        l += c.as_slice().iter().zip(rc.as_slice()).map(|(a, b)| a * b).sum::<f64>();
    }
    l
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

#[test]
fn step_gradients_match_finite_differences() {
    let eps = 1e-5;
    for arch in Arch::ALL {
        for seed in 0..5u64 {
            let mut rng = RngStream::new(100 + seed);
            let cell = random_cell(arch, &mut rng, 3, 4);
            let pr = StepProblem {
                x: random(&mut rng, 2, 3, 1.0),
                state: CellState {
                    h: random(&mut rng, 2, 4, 1.0),
                    c: (arch == Arch::Lstm).then(|| random(&mut rng, 2, 4, 1.0)),
                },
                rh: random(&mut rng, 2, 4, 1.0),
                rc: (arch == Arch::Lstm).then(|| random(&mut rng, 2, 4, 1.0)),
            };
            let (_, cache) = cell.prepare().forward(&pr.x, &pr.state).unwrap();
            let grads = cell_backward(&cell, &cache, &pr.rh, pr.rc.as_ref()).unwrap();

            let mut worst: f64 = 0.0;
            let names: Vec<_> = cell.blocks().iter().map(|(n, _)| *n).collect();
            for (bi, name) in names.iter().enumerate() {
                let analytic = grads.params.blocks()[bi].1.clone();
                for k in 0..analytic.len() {
                    let mut plus = cell.clone();
                    plus.blocks_mut()[bi].1.as_mut_slice()[k] += eps;
                    let mut minus = cell.clone();
                    minus.blocks_mut()[bi].1.as_mut_slice()[k] -= eps;
                    let num = (step_loss(&plus, &pr, &pr.x, &pr.state) - step_loss(&minus, &pr, &pr.x, &pr.state)) / (2.0 * eps);
                    let e = rel_err(analytic.as_slice()[k], num);
                    assert!(e < 1e-6, "{arch} seed {seed} block {name}[{k}]: {} vs {num}", analytic.as_slice()[k]);
                    worst = worst.max(e);
                }
            }
            // input and state gradients
            for k in 0..pr.x.len() {
                let mut xp = pr.x.clone();
                xp.as_mut_slice()[k] += eps;
                let mut xm = pr.x.clone();
                xm.as_mut_slice()[k] -= eps;
                let num = (step_loss(&cell, &pr, &xp, &pr.state) - step_loss(&cell, &pr, &xm, &pr.state)) / (2.0 * eps);
                assert!(rel_err(grads.grad_x.as_slice()[k], num) < 1e-6, "{arch} dx[{k}]");
            }
            for k in 0..pr.state.h.len() {
                let mut sp = pr.state.clone();
                sp.h.as_mut_slice()[k] += eps;
                let mut sm = pr.state.clone();
                sm.h.as_mut_slice()[k] -= eps;
                let num = (step_loss(&cell, &pr, &pr.x, &sp) - step_loss(&cell, &pr, &pr.x, &sm)) / (2.0 * eps);
                assert!(rel_err(grads.grad_h_prev.as_slice()[k], num) < 1e-6, "{arch} dh[{k}]");
            }
            if let Some(c) = &pr.state.c {
                let dc = grads.grad_c_prev.as_ref().unwrap();
                for k in 0..c.len() {
                    let mut sp = pr.state.clone();
                    sp.c.as_mut().unwrap().as_mut_slice()[k] += eps;
                    let mut sm = pr.state.clone();
                    sm.c.as_mut().unwrap().as_mut_slice()[k] -= eps;
                    let num = (step_loss(&cell, &pr, &pr.x, &sp) - step_loss(&cell, &pr, &pr.x, &sm)) / (2.0 * eps);
                    assert!(rel_err(dc.as_slice()[k], num) < 1e-6, "lstm dc[{k}]");
                }
            }
        }
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let mut rng = RngStream::new(9);
    for arch in Arch::ALL {
        let cell = random_cell(arch, &mut rng, 3, 4);
        let state = cell.initial_state(2);
        let (_, cache) = cell.prepare().forward(&random(&mut rng, 2, 3, 1.0), &state).unwrap();
        let zero_c = (arch == Arch::Lstm).then(|| Matrix::zeros(2, 4));
        let g = cell_backward(&cell, &cache, &Matrix::zeros(2, 4), zero_c.as_ref()).unwrap();
        for (_, m) in g.params.blocks() {
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
        assert!(g.grad_h_prev.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.grad_x.as_slice().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn rin_recurrent_gradient_equals_irnn_gradient() {
    let mut rng = RngStream::new(41);
    let rin = CellParams::Rin(random_plain(&mut rng, 3, 4, true));
    let irnn = match &rin {
        CellParams::Rin(p) => CellParams::Irnn(PlainCellParams {
            u: p.effective_recurrent().into_owned(),
            identity_surrogate: false,
            ..p.clone()
        }),
        _ => unreachable!(),
    };
    let x = random(&mut rng, 2, 3, 1.0);
    let state = CellState { h: random(&mut rng, 2, 4, 1.0), c: None };
    let upstream = random(&mut rng, 2, 4, 1.0);
    let (_, c1) = rin.prepare().forward(&x, &state).unwrap();
    let (_, c2) = irnn.prepare().forward(&x, &state).unwrap();
    let g1 = cell_backward(&rin, &c1, &upstream, None).unwrap();
    let g2 = cell_backward(&irnn, &c2, &upstream, None).unwrap();
    for ((_, a), (_, b)) in g1.params.blocks().into_iter().zip(g2.params.blocks()) {
        assert_eq!(a, b);
    }
    assert_eq!(g1.grad_h_prev, g2.grad_h_prev);
}

#[test]
fn mismatched_cache_is_state_error() {
    let mut rng = RngStream::new(1);
    let rin = random_cell(Arch::Rin, &mut rng, 3, 4);
    let lstm = random_cell(Arch::Lstm, &mut rng, 3, 4);
    let (_, cache) = rin.prepare().forward(&Matrix::zeros(1, 3), &rin.initial_state(1)).unwrap();
    assert!(matches!(
        cell_backward(&lstm, &cache, &Matrix::zeros(1, 4), None),
        Err(Error::State(_))
    ));
}

#[test]
fn finite_inputs_give_finite_outputs() {
    let mut rng = RngStream::new(77);
    for arch in Arch::ALL {
        let cell = random_cell(arch, &mut rng, 3, 4);
        let mut state = cell.initial_state(2);
        let prepared = cell.prepare();
        for _ in 0..10 {
            state = prepared.forward(&random(&mut rng, 2, 3, 1.0), &state).unwrap().0;
            assert!(state.h.is_finite());
        }
    }
}
