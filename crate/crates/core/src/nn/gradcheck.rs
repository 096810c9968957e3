//! Central finite-difference checking of the analytic gradients.

use super::layers::Ctx;
use super::sequential::Sequential;
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor: below this magnitude the error is effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location of the worst entry, e.g. `param 2[13]` or `input[4]`.
    pub worst: String,
}

impl GradCheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, a: f64, n: f64) {
        let e = rel_error(a, n);
        self.checked += 1;
        if e > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = e;
            self.worst = what();
        }
    }
}

/// Compare every parameter and input gradient of `net` with central differences.
///
/// `loss` maps the network output to a scalar and its gradient; `ctx` must hand
/// out an identical context on each call so dropout masks are fixed.
pub fn check(
    net: &mut Sequential,
    input: &Tensor,
    loss: &dyn Fn(&Tensor) -> Result<(f64, Tensor)>,
    ctx: &dyn Fn() -> Ctx,
    h: f64,
) -> Result<GradCheckReport> {
    net.zero_grad();
    let out = net.train_forward(input, &mut ctx())?;
    let (_, g) = loss(&out)?;
    let grad_input = net.backward(&g)?;
    let analytic: Vec<Vec<f64>> = net.params_mut().into_iter().map(|(_, g)| g.clone()).collect();

    let eval = |net: &mut Sequential, x: &Tensor| -> Result<f64> {
        let out = net.train_forward(x, &mut ctx())?;
        net.clear_cache();
        Ok(loss(&out)?.0)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: String::new(),
    };
    for (p, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = net.params_mut()[p].0[j];
            net.params_mut()[p].0[j] = orig + h;
            let lp = eval(net, input)?;
            net.params_mut()[p].0[j] = orig - h;
            let lm = eval(net, input)?;
            net.params_mut()[p].0[j] = orig;
            report.record(|| format!("param {p}[{j}]"), a, (lp - lm) / (2.0 * h));
        }
    }
    let mut x = input.clone();
    for j in 0..x.len() {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + h;
        let lp = eval(net, &x)?;
        x.data_mut()[j] = orig - h;
        let lm = eval(net, &x)?;
        x.data_mut()[j] = orig;
        report.record(|| format!("input[{j}]"), grad_input.data()[j], (lp - lm) / (2.0 * h));
    }
    Ok(report)
}

/// Loss `sum(output * weights)`: its output gradient is `weights`, so every path is exercised.
pub fn projection_loss(weights: Tensor) -> impl Fn(&Tensor) -> Result<(f64, Tensor)> {
    move |out: &Tensor| {
        if out.shape() != weights.shape() {
            return Err(crate::Error::dim(
                "projection",
                format!("{:?}", weights.shape()),
                format!("{:?}", out.shape()),
            ));
        }
        let l = out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok((l, weights.clone()))
    }
}
