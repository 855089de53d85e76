use crate::models::LogMelFrontend;
use crate::tensor::{Graph, Real, Var};
use super::TrainError;

/// Coefficients of the raw-waveform L1, log-mel L1 and BCE terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, TrainError> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ws = [self.alpha, self.beta, self.gamma];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().all(|w| *w == 0.0) {
            return Err(TrainError::Config("loss weights must be non-negative and not all zero"));
        }
        Ok(())
    }

    pub fn needs_reconstruction(&self) -> bool {
        self.alpha > 0.0 || self.beta > 0.0
    }

    pub fn needs_prediction(&self) -> bool {
        self.gamma > 0.0
    }
}

/// Tape inputs of the composite loss. A pair may be absent when its weights are zero.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a, F> {
    /// Clean target `y` and estimate `ŷ`.
    pub reconstruction: Option<(Var, Var)>,
    /// Detection probabilities and their `{0, 1}` labels.
    pub prediction: Option<(Var, &'a [F])>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub raw: Option<Var>,
    pub spec: Option<Var>,
    pub bce: Option<Var>,
}

/// Scalar values of one loss evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub raw: Option<f64>,
    pub spec: Option<f64>,
    pub bce: Option<f64>,
}

impl LossParts {
    pub fn values<F: Real>(&self, g: &Graph<F>) -> LossValues {
        let v = |x: Option<Var>| x.map(|x| g.scalar(x).as_f64());
        LossValues {
            total: g.scalar(self.total).as_f64(),
            raw: v(self.raw),
            spec: v(self.spec),
            bce: v(self.bce),
        }
    }
}

/// `α·L1(y, ŷ) + β·L1(S(y), S(ŷ)) + γ·BCE(p, labels)`, each term a mean.
/// Terms with zero weight are not built.
pub fn total_loss<F: Real>(
    g: &mut Graph<F>,
    frontend: &LogMelFrontend<F>,
    weights: &LossWeights,
    inputs: LossInputs<'_, F>,
) -> Result<LossParts, TrainError> {
    weights.validate()?;
    let mut terms: [Option<(Var, f64)>; 3] = [None; 3];
    let (mut raw, mut spec, mut bce) = (None, None, None);
    if weights.needs_reconstruction() {
        let (y, y_hat) = inputs
            .reconstruction
            .ok_or(TrainError::Config("reconstruction weights set but no enhancement output"))?;
        if weights.alpha > 0.0 {
            let l = g.l1_loss(y, y_hat)?;
            raw = Some(l);
            terms[0] = Some((l, weights.alpha));
        }
        if weights.beta > 0.0 {
            let sy = frontend.forward(g, y)?;
            let sy_hat = frontend.forward(g, y_hat)?;
            let l = g.l1_loss(sy, sy_hat)?;
            spec = Some(l);
            terms[1] = Some((l, weights.beta));
        }
    }
    if weights.needs_prediction() {
        let (p, labels) = inputs
            .prediction
            .ok_or(TrainError::Config("classification weight set but no detector output"))?;
        let l = g.bce_loss(p, labels)?;
        bce = Some(l);
        terms[2] = Some((l, weights.gamma));
    }
    let mut total: Option<Var> = None;
    for (l, w) in terms.into_iter().flatten() {
        let scaled = if w == 1.0 { l } else { g.mul_scalar(l, F::from_f64(w))? };
        total = Some(match total {
            None => scaled,
            Some(t) => g.add(t, scaled)?,
        });
    }
    Ok(LossParts {
        total: total.expect("validated weights have a positive term"),
        raw,
        spec,
        bce,
    })
}
