use crate::potential::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    V,
    Alpha,
}

/// States at `t = k tau`, `k = 0..=K`, with the time interpolants built on
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(tau: f64, initial: State) -> Self {
        Self { tau, states: vec![initial] }
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.n_steps() as f64 * self.tau
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn field(&self, k: usize, f: Field) -> &[f64] {
        let s = &self.states[k];
        match f {
            Field::U => &s.u,
            Field::V => &s.v,
            Field::Alpha => &s.alpha,
        }
    }

    /// Index `k` with `t` in `((k-1) tau, k tau]`; 0 only at `t = 0`.
    pub fn step_index(&self, t: f64) -> usize {
        assert!(
            t >= 0.0 && t <= self.end_time() * (1.0 + 1e-12),
            "time {t} outside [0, {}]",
            self.end_time()
        );
        if t == 0.0 {
            return 0;
        }
        let r = t / self.tau;
        let k = if (r - r.round()).abs() <= 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
        (k as usize).clamp(1, self.n_steps())
    }

    /// Piecewise constant, right-continuous in the step sense: the value at
    /// the end of the step containing `t`.
    pub fn upper(&self, f: Field, t: f64) -> Vec<f64> {
        self.field(self.step_index(t), f).to_vec()
    }

    /// Piecewise constant: the value at the start of the step containing `t`.
    pub fn lower(&self, f: Field, t: f64) -> Vec<f64> {
        self.field(self.step_index(t).saturating_sub(1), f).to_vec()
    }

    /// Average of the two neighbouring states.
    pub fn midpoint(&self, f: Field, t: f64) -> Vec<f64> {
        let k = self.step_index(t);
        let a = self.field(k.saturating_sub(1), f);
        let b = self.field(k, f);
        a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// Piecewise affine interpolant.
    pub fn affine(&self, f: Field, t: f64) -> Vec<f64> {
        let k = self.step_index(t);
        if k == 0 {
            return self.field(0, f).to_vec();
        }
        let s = (t - (k - 1) as f64 * self.tau) / self.tau;
        let a = self.field(k - 1, f);
        let b = self.field(k, f);
        a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
    }

    /// Time derivative of the affine interpolant on the step containing `t`.
    pub fn affine_rate(&self, f: Field, t: f64) -> Vec<f64> {
        let k = self.step_index(t).max(1);
        let a = self.field(k - 1, f);
        let b = self.field(k, f);
        a.iter().zip(b).map(|(x, y)| (y - x) / self.tau).collect()
    }

    /// Largest defect of `(u^k - u^{k-1})/tau = (v^k + v^{k-1})/2`,
    /// relative to the velocity magnitude.
    pub fn midpoint_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        let mut scale = 0.0f64;
        for k in 1..self.states.len() {
            let (p, c) = (&self.states[k - 1], &self.states[k]);
            for i in 0..c.u.len() {
                let rate = (c.u[i] - p.u[i]) / self.tau;
                defect = defect.max((rate - 0.5 * (c.v[i] + p.v[i])).abs());
                scale = scale.max(rate.abs()).max(c.v[i].abs()).max(p.v[i].abs());
            }
        }
        if defect == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }
}
