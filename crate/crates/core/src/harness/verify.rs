use crate::analysis::{
    aee_step, aee_vs_final, carry_closed_from_first, carry_closed_state, expand_gated, lambda_decompose, record_traces,
    ResidualSeries, TraceOptions, TraceRecord,
};
use crate::bptt::{forward_sequence, loss_and_gradients, HeadKind, Network, NetworkConfig, SequenceBatch, Targets};
use crate::cells::{irnn_step, rin_step, Arch, CellParams, GateSnapshot};
use crate::error::Result;
use crate::numerics::{Matrix, RngStream};

/// Outcome of one verification family.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn gaussian(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.normal(std))
}

fn unit(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform())
}

fn random_network(rng: &mut RngStream, arch: Arch, d: usize, h: usize, layers: usize) -> Result<Network<f64>> {
    let mut net = Network::zeros(&NetworkConfig::new(arch, d, h, layers, HeadKind::Regression))?;
    for (_, m) in net.blocks_mut() {
        *m = gaussian(rng, m.rows(), m.cols(), 0.5);
    }
    Ok(net)
}

fn random_batch(rng: &mut RngStream, t: usize, b: usize, d: usize) -> Result<SequenceBatch<f64>> {
    let inputs = (0..t).map(|_| gaussian(rng, b, d, 1.0)).collect();
    SequenceBatch::new(inputs, None, Targets::Regression(gaussian(rng, b, 1, 1.0)))
}

/// `MSE(plus) - MSE(minus)` without subtracting the two losses.
fn mse_difference(plus: &Matrix<f64>, minus: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let terms = (0..y.rows()).map(|i| {
        let (p, m) = (plus.get(i, 0), minus.get(i, 0));
        (p - m) * (p + m - 2.0 * y.get(i, 0))
    });
    terms.sum::<f64>() / y.rows() as f64
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// BPTT against central differences (`ε = 1e-5`) for every architecture,
/// 1 and 2 layers, `T ∈ {2, 4}`, `D = 3`, `H = 4`, `B = 2`.
pub fn check_gradients(seeds: u64) -> Result<CheckResult> {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for arch in Arch::ALL {
        for layers in [1, 2] {
            for t in [2, 4] {
                for seed in 0..seeds {
                    let mut rng = RngStream::new(seed).fork(layers as u64 * 10 + t as u64);
                    let net = random_network(&mut rng, arch, 3, 4, layers)?;
                    let batch = random_batch(&mut rng, t, 2, 3)?;
                    let (_, grads, _) = loss_and_gradients(&net, &batch)?;
                    let Targets::Regression(y) = batch.targets() else {
                        unreachable!("regression batch")
                    };
                    let at = |n: &Network<f64>| -> Result<Matrix<f64>> { Ok(forward_sequence(n, &batch)?.0) };
                    for (bi, (_, g)) in grads.blocks.iter().enumerate() {
                        for k in 0..g.len() {
                            let mut probe = net.clone();
                            probe.blocks_mut()[bi].1.as_mut_slice()[k] += eps;
                            let up = at(&probe)?;
                            probe.blocks_mut()[bi].1.as_mut_slice()[k] -= 2.0 * eps;
                            let down = at(&probe)?;
                            let numeric = mse_difference(&up, &down, y) / (2.0 * eps);
                            worst = worst.max(relative_error(g.as_slice()[k], numeric));
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(CheckResult {
        name: "gradient",
        cases,
        worst,
        tolerance: 1e-6,
    })
}

fn random_schedule(rng: &mut RngStream, t: usize, b: usize, h: usize, carry: Option<f64>) -> Vec<GateSnapshot<f64>> {
    (0..t)
        .map(|_| GateSnapshot {
            transform: gaussian(rng, b, h, 1.0),
            transform_gate: unit(rng, b, h),
            carry_gate: match carry {
                Some(c) => Matrix::filled(b, h, c),
                None => unit(rng, b, h),
            },
        })
        .collect()
}

fn schedule_shape(rng: &mut RngStream) -> (usize, usize, usize) {
    (1 + rng.below(16), 1 + rng.below(3), 1 + rng.below(8))
}

/// Closed-form expansion and `h_0 + λ` against the recursion on random gate
/// schedules.
pub fn check_expansion(schedules: usize) -> Result<[CheckResult; 2]> {
    let (mut closed, mut lambda) = (0.0f64, 0.0f64);
    let mut rng = RngStream::new(0x5eed);
    for _ in 0..schedules {
        let (t, b, h) = schedule_shape(&mut rng);
        let h0 = gaussian(&mut rng, b, h, 1.0);
        let trace = TraceRecord::from_schedule(h0.clone(), random_schedule(&mut rng, t, b, h, None))?;
        closed = closed.max(expand_gated(&trace, &h0)?.max_abs_diff(trace.last()));
        let l = lambda_decompose(&trace, &ResidualSeries::from_trace(&trace))?;
        lambda = lambda.max(l.reconstruct(&h0).max_abs_diff(trace.last()));
    }
    Ok([
        CheckResult {
            name: "expansion",
            cases: schedules,
            worst: closed,
            tolerance: 1e-12,
        },
        CheckResult {
            name: "lambda",
            cases: schedules,
            worst: lambda,
            tolerance: 1e-10,
        },
    ])
}

/// `C ≡ 0`: λ equals the residual sum, and from `h_0 = 0` the state is
/// `h_1 + Σ_{t≥2} ε_t`.
pub fn check_carry_closed(traces: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut rng = RngStream::new(0xc105ed);
    for _ in 0..traces {
        let (t, b, h) = schedule_shape(&mut rng);
        let gates = random_schedule(&mut rng, t, b, h, Some(0.0));
        let h0 = gaussian(&mut rng, b, h, 1.0);
        let trace = TraceRecord::from_schedule(h0.clone(), gates.clone())?;
        let res = ResidualSeries::from_trace(&trace);
        let l = lambda_decompose(&trace, &res)?;
        let sum = res.total().expect("non-empty trace");
        worst = worst.max(l.total.max_abs_diff(&sum));
        worst = worst.max(carry_closed_state(&h0, &res)?.max_abs_diff(trace.last()));

        let from_zero = TraceRecord::from_schedule(Matrix::zeros(b, h), gates)?;
        let res = ResidualSeries::from_trace(&from_zero);
        worst = worst.max(carry_closed_from_first(&from_zero, &res)?.max_abs_diff(from_zero.last()));
    }
    Ok(CheckResult {
        name: "carry_closed",
        cases: traces,
        worst,
        tolerance: 1e-12,
    })
}

/// `rin_step` against `irnn_step` with `U + I`; any difference fails.
pub fn check_rin_irnn(instances: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut rng = RngStream::new(0x1d);
    for _ in 0..instances {
        let (b, d, h) = (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(8));
        let net = random_network(&mut rng, Arch::Rin, d, h, 1)?;
        let CellParams::Rin(rin) = &net.layers[0] else {
            unreachable!("rin layers are plain")
        };
        let mut irnn = rin.clone();
        irnn.identity_surrogate = false;
        for i in 0..h {
            irnn.u.set(i, i, irnn.u.get(i, i) + 1.0);
        }
        let x = gaussian(&mut rng, b, d, 1.0);
        let prev = gaussian(&mut rng, b, h, 1.0);
        let a = rin_step(rin, &x, &prev)?.h;
        let c = irnn_step(&irnn, &x, &prev)?.h;
        let differs = a.as_slice().iter().zip(c.as_slice()).any(|(p, q)| p.to_bits() != q.to_bits());
        worst = worst.max(if differs { f64::INFINITY } else { 0.0 });
    }
    Ok(CheckResult {
        name: "rin_irnn",
        cases: instances,
        worst,
        tolerance: 0.0,
    })
}

/// On random networks: the final-state error is zero at `t = T`, and step
/// errors telescope to `mean(h_T - h_0)`.
pub fn check_aee(networks: usize) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut rng = RngStream::new(0xaee);
    for i in 0..networks {
        let arch = Arch::ALL[i % Arch::ALL.len()];
        let net = random_network(&mut rng, arch, 3, 5, 1)?;
        let t = 2 + rng.below(12);
        let batch = random_batch(&mut rng, t, 4, 3)?;
        let trace = record_traces(&net, &batch, &TraceOptions::default())?;
        let fin = aee_vs_final(&trace)?;
        worst = worst.max(fin.mean.last().copied().unwrap_or(f64::INFINITY).abs());
        let step = aee_step(&trace)?;
        let diff = trace.last().as_slice().iter().zip(trace.initial().as_slice());
        let target = diff.map(|(a, b)| a - b).sum::<f64>() / trace.last().len() as f64;
        worst = worst.max((step.mean.iter().sum::<f64>() - target).abs());
    }
    Ok(CheckResult {
        name: "aee",
        cases: networks,
        worst,
        tolerance: 1e-12,
    })
}

/// The full suite as run by `rin verify`.
pub fn verify_suite(gradient_seeds: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![check_gradients(gradient_seeds)?];
    out.extend(check_expansion(100)?);
    out.push(check_carry_closed(50)?);
    out.push(check_rin_irnn(100)?);
    out.push(check_aee(25)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_small_sweep() {
        for check in verify_suite(1).unwrap() {
            assert!(check.passed(), "{check:?}");
            assert!(check.cases > 0);
        }
    }

    #[test]
    fn a_wrong_identity_shift_is_caught() {
        let mut rng = RngStream::new(1);
        let net = random_network(&mut rng, Arch::Rin, 2, 3, 1).unwrap();
        let CellParams::Rin(rin) = &net.layers[0] else { unreachable!() };
        let mut irnn = rin.clone();
        irnn.identity_surrogate = false;
        let x = Matrix::ones(1, 2);
        let prev = Matrix::ones(1, 3);
        assert_ne!(rin_step(rin, &x, &prev).unwrap(), irnn_step(&irnn, &x, &prev).unwrap());
    }
}
