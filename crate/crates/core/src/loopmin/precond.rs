//! Inverse of the periodic second-difference operator `a·(2I − S − Sᵀ) + b·I`,
//! the kinetic part of the discrete action Hessian on closed loops.

#[derive(Debug, Clone)]
pub(crate) struct CyclicSolver {
    n: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    diag: f64,
    off: f64,
    gamma: f64,
    /// Forward-elimination coefficients of the modified tridiagonal system.
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
    /// Solution of the system against the Sherman–Morrison correction vector.
    z: Vec<f64>,
    /// `1 + z₀ + β z_{n−1}/γ`.
    z_scale: f64,
}

impl CyclicSolver {
    /// `a > 0`, `b > 0`, `n ≥ 3`.
    pub(crate) fn new(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 3);
        let diag = 2.0 * a + b;
        let off = -a;
        let gamma = -diag;
        let mut s = Self {
            n,
            diag,
            off,
            gamma,
            c_prime: vec![0.0; n],
            inv_denom: vec![0.0; n],
            z: vec![0.0; n],
            z_scale: 0.0,
        };
        // Thomas factorisation of the tridiagonal part with corrected corners.
        let corner = off * off / gamma;
        let mut prev_c = 0.0;
        for i in 0..n {
            let mut bi = diag;
            if i == 0 {
                bi -= gamma;
            }
            if i == n - 1 {
                bi -= corner;
            }
            let denom = bi - if i == 0 { 0.0 } else { off * prev_c };
            s.inv_denom[i] = 1.0 / denom;
            prev_c = off / denom;
            s.c_prime[i] = prev_c;
        }
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        s.solve_tridiagonal(&mut u);
        s.z_scale = 1.0 + u[0] + off * u[n - 1] / gamma;
        s.z = u;
        s
    }

    fn solve_tridiagonal(&self, r: &mut [f64]) {
        let n = self.n;
        r[0] *= self.inv_denom[0];
        for i in 1..n {
            r[i] = (r[i] - self.off * r[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            r[i] -= self.c_prime[i] * r[i + 1];
        }
    }

    /// Solve in place.
    pub(crate) fn solve(&self, r: &mut [f64]) {
        self.solve_tridiagonal(r);
        let n = self.n;
        let factor = (r[0] + self.off * r[n - 1] / self.gamma) / self.z_scale;
        for (ri, zi) in r.iter_mut().zip(&self.z) {
            *ri -= factor * zi;
        }
    }

    #[cfg(test)]
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| self.diag * x[i] + self.off * (x[(i + n - 1) % n] + x[(i + 1) % n]))
            .collect()
    }
}
