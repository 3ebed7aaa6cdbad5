use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is zero are judged on absolute error instead.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compares reverse-mode gradients of `f` with central differences over
/// every coordinate of `params`. `f` receives one differentiable leaf per
/// parameter tensor and must return a scalar node.
pub fn grad_check<F>(params: &[Tensor], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.input(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        if !g.value(out).is_scalar() {
            return Err(Error::Invalid("grad_check target must be scalar".into()));
        }
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.input(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut entries = Vec::new();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(params[pi].shape()));
        for idx in 0..params[pi].len() {
            let orig = work[pi].data()[idx];
            work[pi].data_mut()[idx] = orig + opts.eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[idx] = orig - opts.eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic.data()[idx];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            entries.push(GradCheckEntry {
                param: pi,
                index: idx,
                analytic: a,
                numeric,
                rel_err: (a - numeric).abs() / denom,
            });
        }
    }
    let max_rel_err = entries.iter().map(|e| e.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_err < opts.tol,
        max_rel_err,
        tol: opts.tol,
        entries,
    })
}
