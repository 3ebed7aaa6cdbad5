//! Continuous-time clipped dynamics and the quadratic energy they descend.
//!
//! The continuous rule `dv/dt = clip(W v + I)` zeroes any velocity that
//! would push a saturated neuron past its bound. With symmetric `W` the
//! energy `E = −½ vᵀWv − Iᵀv` is then non-increasing. This module integrates
//! that rule with explicit Euler steps so the property can be checked
//! numerically; training and retrieval use the discrete update instead.

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

/// Rate clipping at the box boundary: passes `x` inside `(-1, 1)`, keeps only
/// inward motion at `v = ±1`.
pub fn clip_rate(x: f64, v: f64) -> Result<f64> {
    if !(v.abs() <= 1.0) {
        return Err(Error::Domain { value: v });
    }
    Ok(clip_unchecked(x, v))
}

fn clip_unchecked(x: f64, v: f64) -> f64 {
    if v >= 1.0 {
        x.min(0.0)
    } else if v <= -1.0 {
        x.max(0.0)
    } else {
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn matvec(w: &Tensor, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(w.row_slice(i), v);
    }
}

fn check_square(w: &Tensor, n: usize, op: &'static str) -> Result<()> {
    if w.shape() != [n, n] {
        return Err(Error::Shape {
            op,
            lhs: w.shape().to_vec(),
            rhs: vec![n, n],
        });
    }
    Ok(())
}

/// `−½ Σᵢⱼ wᵢⱼ vᵢ vⱼ − Σᵢ Iᵢ vᵢ`.
pub fn energy(v: &[f64], w: &Tensor, input: &[f64]) -> Result<f64> {
    let n = v.len();
    check_square(w, n, "energy")?;
    if input.len() != n {
        return Err(Error::Shape {
            op: "energy",
            lhs: vec![n],
            rhs: vec![input.len()],
        });
    }
    let mut wv = vec![0.0; n];
    matvec(w, v, &mut wv);
    Ok(-0.5 * dot(v, &wv) - dot(input, v))
}

/// One explicit Euler step `vᵢ ← clamp(vᵢ + η·clip(Σⱼ wᵢⱼ vⱼ + Iᵢ, vᵢ))`.
pub fn continuous_step(v: &[f64], w: &Tensor, input: &[f64], eta: f64) -> Result<Vec<f64>> {
    let n = v.len();
    check_square(w, n, "continuous_step")?;
    if input.len() != n {
        return Err(Error::Shape {
            op: "continuous_step",
            lhs: vec![n],
            rhs: vec![input.len()],
        });
    }
    if !(eta >= 0.0) {
        return Err(Error::Invalid(format!("step size must be >= 0, got {eta}")));
    }
    let mut x = vec![0.0; n];
    matvec(w, v, &mut x);
    v.iter()
        .zip(&x)
        .zip(input)
        .map(|((&vi, &xi), &ii)| Ok((vi + eta * clip_rate(xi + ii, vi)?).clamp(-1.0, 1.0)))
        .collect()
}

/// A standalone recurrent system for energy checks. `dynamics` drives the
/// state; the energy is always evaluated with its symmetric part, so an
/// asymmetric `dynamics` matrix models a broken symmetry constraint.
#[derive(Debug, Clone)]
pub struct HopfieldSystem {
    pub dynamics: Tensor,
    pub input: Vec<f64>,
}

impl HopfieldSystem {
    /// Symmetric `W` with entries `~N(0, 1/N)` and `I ~ N(0, 1)`.
    pub fn random(n: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (n as f64).sqrt();
        let mut w = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in i..n {
                let x = std * rng.normal();
                w.set(i, j, x);
                w.set(j, i, x);
            }
        }
        let input = (0..n).map(|_| rng.normal()).collect();
        Self { dynamics: w, input }
    }

    /// Adds a skew-symmetric part with entries `~N(0, scale²/N)`.
    pub fn with_skew(mut self, scale: f64, rng: &mut Rng) -> Self {
        let n = self.input.len();
        let std = scale / (n as f64).sqrt();
        for i in 0..n {
            for j in i + 1..n {
                let s = std * rng.normal();
                let (a, b) = (self.dynamics.get(i, j), self.dynamics.get(j, i));
                self.dynamics.set(i, j, a + s);
                self.dynamics.set(j, i, b - s);
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn energy_weights(&self) -> Tensor {
        let t = self.dynamics.transpose().expect("square");
        self.dynamics.add(&t).expect("square").scale(0.5)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| self.dynamics.get(i, j) == self.dynamics.get(j, i)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentReport {
    pub steps: usize,
    /// Largest `E[t+1] − E[t]` seen (negative when every step descended).
    pub max_increase: f64,
    pub worst_step: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Neuron-steps spent in the interior, at `+1` and at `−1`.
    pub interior: usize,
    pub at_upper: usize,
    pub at_lower: usize,
    /// Neuron-steps where clipping actually zeroed an outward rate.
    pub clipped: usize,
}

/// Integrates `steps` Euler steps from `v0` and tracks per-step energy change.
pub fn descent_check(sys: &HopfieldSystem, v0: &[f64], eta: f64, steps: usize) -> Result<DescentReport> {
    let n = sys.len();
    if v0.len() != n {
        return Err(Error::Shape {
            op: "descent_check",
            lhs: vec![n],
            rhs: vec![v0.len()],
        });
    }
    if let Some(&bad) = v0.iter().find(|x| !(x.abs() <= 1.0)) {
        return Err(Error::Domain { value: bad });
    }
    let sym = sys.is_symmetric();
    let w_e = if sym {
        sys.dynamics.clone()
    } else {
        sys.energy_weights()
    };
    let mut v = v0.to_vec();
    let mut rate = vec![0.0; n];
    let mut wv = vec![0.0; n];

    let energy_of = |v: &[f64], wv: &mut [f64]| {
        matvec(&w_e, v, wv);
        -0.5 * dot(v, wv) - dot(&sys.input, v)
    };
    let mut e = energy_of(&v, &mut wv);
    let mut report = DescentReport {
        steps,
        max_increase: f64::NEG_INFINITY,
        initial_energy: e,
        ..Default::default()
    };
    for t in 0..steps {
        if sym {
            // the energy pass already computed W v
            rate.copy_from_slice(&wv);
        } else {
            matvec(&sys.dynamics, &v, &mut rate);
        }
        for i in 0..n {
            let x = rate[i] + sys.input[i];
            let vi = v[i];
            if vi >= 1.0 {
                report.at_upper += 1;
            } else if vi <= -1.0 {
                report.at_lower += 1;
            } else {
                report.interior += 1;
            }
            let c = clip_unchecked(x, vi);
            if c != x {
                report.clipped += 1;
            }
            v[i] = (vi + eta * c).clamp(-1.0, 1.0);
        }
        let next = energy_of(&v, &mut wv);
        let inc = next - e;
        if inc > report.max_increase {
            report.max_increase = inc;
            report.worst_step = t;
        }
        e = next;
    }
    report.final_energy = e;
    Ok(report)
}
