//! Sum-product decoding with a horizontal layered (per check) schedule.

use super::LdpcCode;

const LLR_CLAMP: f64 = 40.0;
const PHI_MIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Hard-decision codeword after the last iteration.
    pub codeword: Vec<u8>,
    /// Iterations run; zero when the channel decisions were already a codeword.
    pub iterations: usize,
    /// All checks satisfied and no bit left undecided.
    pub converged: bool,
}

/// φ(x) = -ln tanh(x/2), its own inverse on (0, ∞).
#[inline]
fn phi(x: f64) -> f64 {
    let x = x.clamp(PHI_MIN, LLR_CLAMP);
    ((x.exp() + 1.0) / x.exp_m1()).ln()
}

fn hard(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
}

fn settled(code: &LdpcCode, llrs: &[f64]) -> bool {
    llrs.iter().all(|&l| l != 0.0) && code.is_codeword(&hard(llrs))
}

pub(super) fn decode_layered(code: &LdpcCode, llrs: &[f64], max_iterations: usize) -> DecodeOutcome {
    assert_eq!(llrs.len(), code.n(), "one LLR per code bit");
    let mut post: Vec<f64> = llrs
        .iter()
        .map(|&l| if l.is_finite() { l.clamp(-LLR_CLAMP, LLR_CLAMP) } else { 0.0 })
        .collect();
    if settled(code, &post) {
        return DecodeOutcome {
            codeword: hard(&post),
            iterations: 0,
            converged: true,
        };
    }

    let checks = code.checks();
    let mut messages: Vec<Vec<f64>> = checks.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut extrinsic = Vec::new();
    for iteration in 1..=max_iterations {
        for (vars, msgs) in checks.iter().zip(messages.iter_mut()) {
            extrinsic.clear();
            let mut sum_phi = 0.0;
            let mut sign = 1.0;
            for (&v, &r) in vars.iter().zip(msgs.iter()) {
                let q = post[v] - r;
                extrinsic.push(q);
                sum_phi += phi(q.abs());
                if q < 0.0 {
                    sign = -sign;
                }
            }
            let zeros = extrinsic.iter().filter(|&&e| e == 0.0).count();
            for ((&v, r), &q) in vars.iter().zip(msgs.iter_mut()).zip(&extrinsic) {
                let own_sign = if q < 0.0 { -sign } else { sign };
                // Any other undecided input leaves this message undecided too.
                let others_zero = zeros - usize::from(q == 0.0);
                let mag = if others_zero > 0 {
                    0.0
                } else {
                    phi((sum_phi - phi(q.abs())).max(PHI_MIN))
                };
                *r = own_sign * mag;
                post[v] = (q + *r).clamp(-LLR_CLAMP * 4.0, LLR_CLAMP * 4.0);
            }
        }
        if settled(code, &post) {
            return DecodeOutcome {
                codeword: hard(&post),
                iterations: iteration,
                converged: true,
            };
        }
    }
    DecodeOutcome {
        codeword: hard(&post),
        iterations: max_iterations,
        converged: false,
    }
}
