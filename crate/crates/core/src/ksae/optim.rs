use crate::error::{Error, Result};

/// Which velocity the parameter update uses.
///
/// `Updated` is heavy-ball momentum (`v ← m·v − η·g; θ ← θ + v`).
/// `Literal` adds the velocity from *before* this step's update
/// (`θ ← θ + v; v ← m·v − η·g`), which is how the update rule reads when
/// the subscripts are taken at face value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VelocityRule {
    #[default]
    Updated,
    Literal,
}

impl std::str::FromStr for VelocityRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "updated" => Ok(Self::Updated),
            "literal" => Ok(Self::Literal),
            other => Err(format!("unknown velocity rule `{other}` (expected updated|literal)")),
        }
    }
}

impl std::fmt::Display for VelocityRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Updated => "updated",
            Self::Literal => "literal",
        })
    }
}

/// Velocity buffers for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    velocities: Vec<Vec<f64>>,
    pub epoch: usize,
    pub step: u64,
}

impl OptimizerState {
    /// Zero velocities for tensors of the given lengths.
    pub fn new(lengths: &[usize]) -> Self {
        Self {
            velocities: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            epoch: 0,
            step: 0,
        }
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    pub fn velocities_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.velocities
    }
}

/// One momentum-SGD step over matching parameter and gradient tensors.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn sgd_momentum_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    momentum: f64,
    eta: f64,
    rule: VelocityRule,
) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidConfig(format!("momentum must be in [0, 1), got {momentum}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!("learning rate must be positive, got {eta}")));
    }
    if params.len() != grads.len() || params.len() != state.velocities.len() {
        return Err(Error::dims("sgd_momentum_step (tensor count)", state.velocities.len(), params.len()));
    }
    for (t, ((p, g), v)) in params.iter().zip(grads).zip(&state.velocities).enumerate() {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::dims("sgd_momentum_step", v.len(), format!("{} (tensor {t})", g.len())));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient tensor {t} at step {}", state.step)));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocities.iter_mut()) {
        for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            let next = momentum * *vi - eta * gi;
            match rule {
                VelocityRule::Updated => *pi += next,
                VelocityRule::Literal => *pi += *vi,
            }
            *vi = next;
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(p: &mut Vec<f64>, g: &[f64], s: &mut OptimizerState, m: f64, eta: f64, rule: VelocityRule) {
        sgd_momentum_step(&mut [p.as_mut_slice()], &[g], s, m, eta, rule).unwrap();
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(&[1]);
        step(&mut p, &[1.0], &mut s, 0.9, 0.01, VelocityRule::Updated);
        assert!((s.velocities()[0][0] + 0.01).abs() < 1e-15);
        assert!((p[0] - 0.99).abs() < 1e-15);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn geometric_decay_without_gradient() {
        let mut p = vec![0.0];
        let mut s = OptimizerState::new(&[1]);
        s.velocities_mut()[0][0] = 1.0;
        let mut increments = Vec::new();
        for _ in 0..4 {
            let before = p[0];
            step(&mut p, &[0.0], &mut s, 0.5, 0.1, VelocityRule::Literal);
            increments.push(p[0] - before);
        }
        assert_eq!(increments, vec![1.0, 0.5, 0.25, 0.125]);

        // the heavy-ball reading applies the decayed velocity immediately
        let mut p = vec![0.0];
        let mut s = OptimizerState::new(&[1]);
        s.velocities_mut()[0][0] = 1.0;
        step(&mut p, &[0.0], &mut s, 0.5, 0.1, VelocityRule::Updated);
        assert_eq!(p[0], 0.5);
    }

    #[test]
    fn zero_momentum_is_plain_gradient_descent() {
        let mut p = vec![2.0, -1.0];
        let mut s = OptimizerState::new(&[2]);
        step(&mut p, &[1.0, -2.0], &mut s, 0.0, 0.1, VelocityRule::Updated);
        step(&mut p, &[0.5, 0.5], &mut s, 0.0, 0.1, VelocityRule::Updated);
        assert!((p[0] - (2.0 - 0.1 - 0.05)).abs() < 1e-15);
        assert!((p[1] - (-1.0 + 0.2 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut p = vec![1.0, 1.0];
        let mut s = OptimizerState::new(&[2]);
        let err = sgd_momentum_step(&mut [p.as_mut_slice()], &[&[0.1, f64::NAN]], &mut s, 0.9, 0.1, VelocityRule::Updated);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(&[1]);
        assert!(sgd_momentum_step(&mut [p.as_mut_slice()], &[&[0.0]], &mut s, 1.0, 0.1, VelocityRule::Updated).is_err());
        assert!(sgd_momentum_step(&mut [p.as_mut_slice()], &[&[0.0]], &mut s, 0.5, 0.0, VelocityRule::Updated).is_err());
    }
}
