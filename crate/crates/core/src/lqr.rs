//! Finite-horizon input-driven LQR in batch (stacked) form.
//!
//! Dynamics `x_{t+1} = A x_t + B u_t + C s_t` over `T` steps with cost
//! `J = Σ_{t=0}^{T} x_tᵀ Q x_t + Σ_{t=0}^{T-1} u_tᵀ R u_t`.
//!
//! Stacked vectors use time-major order: `u = [u_0; u_1; …; u_{T-1}]` (length
//! `mT`) and `s = [s_0; …; s_{T-1}]` (length `pT`). Unrolling the dynamics gives
//! `x_{t+1} = A^{t+1} x_0 + M_t u + N_t s`, where `M_t` is the block row
//! `[A^t B, A^{t-1} B, …, B, 0, …, 0]` and `N_t` is the same with `C`.
//! Substituting into `J` yields
//!
//! ```text
//! J(u) = uᵀ K u + 2 uᵀ (L1 x_0 + L2 s) + const
//! K  = BlockDiag(R, …, R) + Σ_t M_tᵀ Q M_t
//! L1 = Σ_t M_tᵀ Q A^{t+1}
//! L2 = Σ_t M_tᵀ Q N_t
//! ```
//!
//! so `u* = −K⁻¹ (L1 x_0 + L2 s)` and the regret of acting on a forecast `ŝ`
//! instead of `s` is `(û − u*)ᵀ K (û − u*) = (ŝ − s)ᵀ Ψ (ŝ − s)` with
//! `Ψ = L2ᵀ K⁻¹ L2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{check_len, Error, Result};

/// Relative tolerance for the symmetry and positive-definiteness checks.
pub const PD_TOL: f64 = 1e-10;

/// Largest acceptable condition number of `K` before refusing to compile.
const MAX_K_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct LqrSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub horizon: usize,
    pub x0: DVector<f64>,
}

impl LqrSystem {
    /// Builds a system and checks its invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        horizon: usize,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let sys = Self {
            a,
            b,
            c,
            q,
            r,
            horizon,
            x0,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Scalar system `x_{t+1} = a x_t + b u_t + c s_t` with scalar costs.
    pub fn scalar(a: f64, b: f64, c: f64, q: f64, r: f64, horizon: usize, x0: f64) -> Result<Self> {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), m(c), m(q), m(r), horizon, DVector::from_element(1, x0))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn series_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("system.a must be non-empty".into()));
        }
        if self.a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "system.a must be square, got {}x{}",
                n,
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "system.b must be {n}xm with m >= 1, got {}x{}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if self.c.nrows() != n || self.c.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "system.c must be {n}xp with p >= 1, got {}x{}",
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        let m = self.b.ncols();
        if self.q.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "system.q must be {n}x{n}, got {}x{}",
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        if self.r.shape() != (m, m) {
            return Err(Error::InvalidInput(format!(
                "system.r must be {m}x{m}, got {}x{}",
                self.r.nrows(),
                self.r.ncols()
            )));
        }
        if self.x0.len() != n {
            return Err(Error::InvalidInput(format!(
                "system.x0 must have length {n}, got {}",
                self.x0.len()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("system.horizon must be >= 1".into()));
        }
        check_pd("system.q", &self.q)?;
        check_pd("system.r", &self.r)?;
        Ok(())
    }
}

/// Symmetry within `PD_TOL` relative to the largest entry.
pub fn is_symmetric(mat: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !mat.is_square() {
        return false;
    }
    let scale = mat.amax().max(1.0);
    (mat - mat.transpose()).amax() <= rel_tol * scale
}

fn check_pd(name: &str, mat: &DMatrix<f64>) -> Result<()> {
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
    }
    if !is_symmetric(mat, PD_TOL) {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    let eig = SymmetricEigen::new(mat.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if max <= 0.0 || min <= PD_TOL * max {
        return Err(Error::InvalidInput(format!(
            "{name} is not positive definite (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok(())
}

/// Precomputed batch matrices for one system and horizon. Immutable.
#[derive(Debug, Clone)]
pub struct CompiledLqr {
    /// `M_t`, mapping stacked actions to `x_{t+1}`.
    pub m: Vec<DMatrix<f64>>,
    /// `N_t`, mapping the stacked series to `x_{t+1}`.
    pub n: Vec<DMatrix<f64>>,
    pub k: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    /// `K⁻¹ L2`, reused for action differences.
    pub kinv_l2: DMatrix<f64>,
    k_chol: Cholesky<f64, Dyn>,
    state_dim: usize,
    action_dim: usize,
    series_dim: usize,
    horizon: usize,
}

impl CompiledLqr {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// `mT`.
    pub fn actions_len(&self) -> usize {
        self.action_dim * self.horizon
    }

    /// `pT`.
    pub fn series_len(&self) -> usize {
        self.series_dim * self.horizon
    }

    /// Solves `K x = rhs` with the cached factorization.
    pub fn solve_k(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.k_chol.solve(rhs)
    }
}

pub fn compile_lqr(sys: &LqrSystem) -> Result<CompiledLqr> {
    sys.validate()?;
    let n = sys.state_dim();
    let m = sys.action_dim();
    let p = sys.series_dim();
    let horizon = sys.horizon;

    // A^0 … A^T
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for t in 0..horizon {
        let next = &sys.a * &powers[t];
        powers.push(next);
    }

    let mut m_blocks = Vec::with_capacity(horizon);
    let mut n_blocks = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut mt = DMatrix::zeros(n, m * horizon);
        let mut nt = DMatrix::zeros(n, p * horizon);
        for j in 0..=t {
            let ap = &powers[t - j];
            mt.view_mut((0, j * m), (n, m)).copy_from(&(ap * &sys.b));
            nt.view_mut((0, j * p), (n, p)).copy_from(&(ap * &sys.c));
        }
        m_blocks.push(mt);
        n_blocks.push(nt);
    }

    let mut k = DMatrix::zeros(m * horizon, m * horizon);
    for t in 0..horizon {
        k.view_mut((t * m, t * m), (m, m)).copy_from(&sys.r);
    }
    let mut l1 = DMatrix::zeros(m * horizon, n);
    let mut l2 = DMatrix::zeros(m * horizon, p * horizon);
    for t in 0..horizon {
        let mtq = m_blocks[t].transpose() * &sys.q;
        k += &mtq * &m_blocks[t];
        l1 += &mtq * &powers[t + 1];
        l2 += &mtq * &n_blocks[t];
    }
    k = (&k + k.transpose()) * 0.5;

    let eig = SymmetricEigen::new(k.clone()).eigenvalues;
    let (kmin, kmax) = (eig.min(), eig.max());
    if kmin <= 0.0 || kmax / kmin > MAX_K_CONDITION {
        return Err(Error::Conditioning(format!(
            "K eigenvalues in [{kmin:e}, {kmax:e}]"
        )));
    }
    let k_chol = Cholesky::new(k.clone())
        .ok_or_else(|| Error::Conditioning("Cholesky factorization of K failed".into()))?;

    let kinv_l2 = k_chol.solve(&l2);
    let psi = l2.transpose() * &kinv_l2;
    let psi = (&psi + psi.transpose()) * 0.5;

    Ok(CompiledLqr {
        m: m_blocks,
        n: n_blocks,
        k,
        l1,
        l2,
        psi,
        kinv_l2,
        k_chol,
        state_dim: n,
        action_dim: m,
        series_dim: p,
        horizon,
    })
}

/// `u* = −K⁻¹ (L1 x0 + L2 s)`.
pub fn optimal_actions(
    compiled: &CompiledLqr,
    x0: &DVector<f64>,
    series: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("x0", compiled.state_dim, x0.len())?;
    check_len("series", compiled.series_len(), series.len())?;
    let rhs = &compiled.l1 * x0 + &compiled.l2 * series;
    Ok(-compiled.solve_k(&rhs))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `(T+1) × n`, row `t` is `x_t`.
    pub states: DMatrix<f64>,
    /// `T × m`, row `t` is `u_t`.
    pub actions: DMatrix<f64>,
    pub cost: f64,
}

/// Simulates the dynamics against `true_series` and accumulates the cost.
pub fn rollout(
    sys: &LqrSystem,
    x0: &DVector<f64>,
    actions: &DVector<f64>,
    true_series: &DVector<f64>,
) -> Result<Trajectory> {
    let n = sys.state_dim();
    let m = sys.action_dim();
    let p = sys.series_dim();
    let horizon = sys.horizon;
    check_len("x0", n, x0.len())?;
    check_len("actions", m * horizon, actions.len())?;
    check_len("series", p * horizon, true_series.len())?;

    let mut states = DMatrix::zeros(horizon + 1, n);
    let mut acts = DMatrix::zeros(horizon, m);
    let mut x = x0.clone();
    states.row_mut(0).copy_from(&x.transpose());
    let mut cost = x.dot(&(&sys.q * &x));
    for t in 0..horizon {
        let u = actions.rows(t * m, m).clone_owned();
        let s = true_series.rows(t * p, p).clone_owned();
        cost += u.dot(&(&sys.r * &u));
        x = &sys.a * &x + &sys.b * &u + &sys.c * &s;
        cost += x.dot(&(&sys.q * &x));
        states.row_mut(t + 1).copy_from(&x.transpose());
        acts.row_mut(t).copy_from(&u.transpose());
    }
    Ok(Trajectory {
        states,
        actions: acts,
        cost,
    })
}

pub fn rollout_cost(
    sys: &LqrSystem,
    x0: &DVector<f64>,
    actions: &DVector<f64>,
    true_series: &DVector<f64>,
) -> Result<f64> {
    Ok(rollout(sys, x0, actions, true_series)?.cost)
}

/// `(ŝ − s)ᵀ Ψ (ŝ − s)`.
pub fn regret_quadratic(
    compiled: &CompiledLqr,
    forecast: &DVector<f64>,
    truth: &DVector<f64>,
) -> Result<f64> {
    check_len("forecast", compiled.series_len(), forecast.len())?;
    check_len("truth", compiled.series_len(), truth.len())?;
    let err = forecast - truth;
    Ok(err.dot(&(&compiled.psi * &err)))
}

/// Regret by direct simulation: cost of acting on `forecast` minus cost of
/// acting on `truth`, both evaluated against `truth`.
pub fn regret_rollout(
    sys: &LqrSystem,
    compiled: &CompiledLqr,
    x0: &DVector<f64>,
    forecast: &DVector<f64>,
    truth: &DVector<f64>,
) -> Result<f64> {
    let u_hat = optimal_actions(compiled, x0, forecast)?;
    let u_star = optimal_actions(compiled, x0, truth)?;
    Ok(rollout_cost(sys, x0, &u_hat, truth)? - rollout_cost(sys, x0, &u_star, truth)?)
}

/// `û* − u* = −K⁻¹ L2 (ŝ − s)`.
pub fn action_error(compiled: &CompiledLqr, series_error: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("series error", compiled.series_len(), series_error.len())?;
    Ok(-(&compiled.kinv_l2 * series_error))
}
