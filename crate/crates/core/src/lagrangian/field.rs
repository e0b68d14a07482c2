//! Periodic scalar fields on the torus.
//!
//! Every built-in Lagrangian is assembled from [`ScalarField`]s: metric
//! coefficients, potentials and vector-field components. Fields are
//! evaluated on lifted coordinates and must be 1-periodic in each variable.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use super::Vec2;

/// A 1-periodic C² function on the torus with an analytic gradient.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vec2) -> f64;
    fn gradient(&self, x: &Vec2) -> Vec2;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Harmonic {
    Cos,
    Sin,
}

/// One term `amplitude * cos(2π (k₁x₁ + k₂x₂))` (or `sin`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wave: [i32; 2],
    pub harmonic: Harmonic,
}

/// Finite trigonometric polynomial in the torus coordinates.
///
/// The textual form is a sum of terms such as `1 + 0.2 cos(1,0) - 0.1*sin(0,2)`,
/// where `cos(k1,k2)` stands for `cos(2π(k1 x1 + k2 x2))`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            terms: Vec::new(),
        }
    }

    pub fn cos(amplitude: f64, wave: [i32; 2]) -> Self {
        Self::constant(0.0).with_term(amplitude, wave, Harmonic::Cos)
    }

    pub fn sin(amplitude: f64, wave: [i32; 2]) -> Self {
        Self::constant(0.0).with_term(amplitude, wave, Harmonic::Sin)
    }

    pub fn with_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn with_term(mut self, amplitude: f64, wave: [i32; 2], harmonic: Harmonic) -> Self {
        if wave == [0, 0] {
            if harmonic == Harmonic::Cos {
                self.constant += amplitude;
            }
        } else {
            self.terms.push(TrigTerm {
                amplitude,
                wave,
                harmonic,
            });
        }
        self
    }

    /// True when the polynomial has no non-constant term with nonzero amplitude.
    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    /// Upper bound on `sup |value|`.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>()
    }

    /// Lower bound on `inf value`.
    pub fn inf_bound(&self) -> f64 {
        self.constant - self.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>()
    }
}

impl ScalarField for TrigPoly {
    fn value(&self, x: &Vec2) -> f64 {
        let mut acc = self.constant;
        for t in &self.terms {
            let phase = TAU * (t.wave[0] as f64 * x[0] + t.wave[1] as f64 * x[1]);
            acc += t.amplitude
                * match t.harmonic {
                    Harmonic::Cos => phase.cos(),
                    Harmonic::Sin => phase.sin(),
                };
        }
        acc
    }

    fn gradient(&self, x: &Vec2) -> Vec2 {
        let mut g = Vec2::zeros();
        for t in &self.terms {
            let phase = TAU * (t.wave[0] as f64 * x[0] + t.wave[1] as f64 * x[1]);
            let d = t.amplitude
                * TAU
                * match t.harmonic {
                    Harmonic::Cos => -phase.sin(),
                    Harmonic::Sin => phase.cos(),
                };
            g[0] += d * t.wave[0] as f64;
            g[1] += d * t.wave[1] as f64;
        }
        g
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for t in &self.terms {
            let name = match t.harmonic {
                Harmonic::Cos => "cos",
                Harmonic::Sin => "sin",
            };
            let sign = if t.amplitude < 0.0 { '-' } else { '+' };
            write!(
                f,
                " {sign} {}*{name}({},{})",
                t.amplitude.abs(),
                t.wave[0],
                t.wave[1]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid trigonometric polynomial `{input}`: {reason}")]
pub struct TrigParseError {
    pub input: String,
    pub reason: String,
}

impl FromStr for TrigPoly {
    type Err = TrigParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| TrigParseError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(fail("empty expression"));
        }
        // Split on top-level '+'/'-' that are not part of an exponent or inside
        // parentheses.
        let bytes = compact.as_bytes();
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut depth = 0i32;
        for i in 0..bytes.len() {
            match bytes[i] {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b'+' | b'-' if depth == 0 && i > start => {
                    let prev = bytes[i - 1];
                    if prev != b'e' && prev != b'E' && prev != b'*' {
                        pieces.push(&compact[start..i]);
                        start = i;
                    }
                }
                _ => {}
            }
        }
        pieces.push(&compact[start..]);

        let mut poly = TrigPoly::default();
        for piece in pieces {
            let (sign, body) = match piece.as_bytes()[0] {
                b'+' => (1.0, &piece[1..]),
                b'-' => (-1.0, &piece[1..]),
                _ => (1.0, piece),
            };
            if body.is_empty() {
                return Err(fail("dangling sign"));
            }
            let (coef_str, rest) = match body.find(['c', 's']) {
                Some(pos) => (&body[..pos], Some(&body[pos..])),
                None => (body, None),
            };
            let coef_str = coef_str.strip_suffix('*').unwrap_or(coef_str);
            let coef = if coef_str.is_empty() {
                1.0
            } else {
                coef_str
                    .parse::<f64>()
                    .map_err(|_| fail(&format!("bad coefficient `{coef_str}`")))?
            };
            match rest {
                None => poly.constant += sign * coef,
                Some(h) => {
                    let (harmonic, args) = if let Some(a) = h.strip_prefix("cos") {
                        (Harmonic::Cos, a)
                    } else if let Some(a) = h.strip_prefix("sin") {
                        (Harmonic::Sin, a)
                    } else {
                        return Err(fail(&format!("unknown function in `{h}`")));
                    };
                    let inner = args
                        .strip_prefix('(')
                        .and_then(|a| a.strip_suffix(')'))
                        .ok_or_else(|| fail("expected `(k1,k2)`"))?;
                    let mut ks = inner.split(',');
                    let mut next = || -> Result<i32, TrigParseError> {
                        ks.next()
                            .ok_or_else(|| fail("expected two wave numbers"))?
                            .parse::<i32>()
                            .map_err(|_| fail("wave numbers must be integers"))
                    };
                    let wave = [next()?, next()?];
                    if ks.next().is_some() {
                        return Err(fail("expected two wave numbers"));
                    }
                    poly = poly.with_term(sign * coef, wave, harmonic);
                }
            }
        }
        if !poly.constant.is_finite() || poly.terms.iter().any(|t| !t.amplitude.is_finite()) {
            return Err(fail("non-finite coefficient"));
        }
        Ok(poly)
    }
}
