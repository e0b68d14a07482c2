//! Built-in Lagrangians addressable by name and textual parameters.
//!
//! | name              | parameters                                  |
//! |-------------------|---------------------------------------------|
//! | `flat`            | none                                        |
//! | `metric`          | `a11`, `a12`, `a22`, `f` (trig polynomials) |
//! | `pendulum`        | `eps`                                       |
//! | `double_pendulum` | `eps1`, `eps2`                              |
//! | `vector_field`    | `x1`, `x2` (trig polynomials)               |

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{Lagrangian, Metric, TrigParseError, TrigPoly};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown spec `{0}` (expected flat, metric, pendulum, double_pendulum or vector_field)")]
    UnknownSpec(String),
    #[error("spec `{spec}` does not take parameter `{param}`")]
    UnknownParam { spec: String, param: String },
    #[error("parameter `{param}` of `{spec}` is not a number: `{value}`")]
    BadNumber {
        spec: String,
        param: String,
        value: String,
    },
    #[error(transparent)]
    BadPoly(#[from] TrigParseError),
}

/// Catalog entry: a spec name plus its raw parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecDescriptor {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl SpecDescriptor {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    fn allowed(&self) -> Result<&'static [&'static str], CatalogError> {
        Ok(match self.name.as_str() {
            "flat" => &[],
            "metric" => &["a11", "a12", "a22", "f"],
            "pendulum" => &["eps"],
            "double_pendulum" => &["eps1", "eps2"],
            "vector_field" => &["x1", "x2"],
            other => return Err(CatalogError::UnknownSpec(other.to_string())),
        })
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, CatalogError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CatalogError::BadNumber {
                    spec: self.name.clone(),
                    param: key.to_string(),
                    value: raw.clone(),
                }),
        }
    }

    fn poly(&self, key: &str, default: f64) -> Result<TrigPoly, CatalogError> {
        match self.params.get(key) {
            None => Ok(TrigPoly::constant(default)),
            Some(raw) => Ok(raw.parse()?),
        }
    }

    pub fn build(&self) -> Result<Lagrangian, CatalogError> {
        let allowed = self.allowed()?;
        if let Some(param) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(CatalogError::UnknownParam {
                spec: self.name.clone(),
                param: param.clone(),
            });
        }
        Ok(match self.name.as_str() {
            "flat" => Lagrangian::flat(),
            "metric" => Lagrangian::Mechanical {
                metric: Metric {
                    a11: Arc::new(self.poly("a11", 1.0)?),
                    a12: Arc::new(self.poly("a12", 0.0)?),
                    a22: Arc::new(self.poly("a22", 1.0)?),
                },
                potential: Arc::new(self.poly("f", 0.0)?),
            },
            "pendulum" => Lagrangian::pendulum(self.number("eps", 0.1)?),
            "double_pendulum" => {
                Lagrangian::double_pendulum(self.number("eps1", 0.1)?, self.number("eps2", 0.1)?)
            }
            "vector_field" => Lagrangian::vector_field(self.poly("x1", 0.0)?, self.poly("x2", 0.0)?),
            _ => unreachable!("checked by allowed()"),
        })
    }

    /// Short label such as `pendulum{eps:0.3}`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let inner: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        format!("{}{{{}}}", self.name, inner.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{TorusPoint, Vec2};

    #[test]
    fn builds_every_entry() {
        let o = TorusPoint::new(0.0, 0.0);
        let flat = SpecDescriptor::new("flat").build().unwrap();
        assert_eq!(flat.eval_lagrangian(o, Vec2::new(1.0, 0.0)).unwrap(), 0.5);
        let pend = SpecDescriptor::new("pendulum").with("eps", 0.3).build().unwrap();
        assert!((pend.rest_value(&Vec2::zeros()) - 0.3).abs() < 1e-15);
        let dp = SpecDescriptor::new("double_pendulum")
            .with("eps1", 0.1)
            .with("eps2", 0.2)
            .build()
            .unwrap();
        assert!((dp.rest_value(&Vec2::new(0.5, 0.5)) + 0.3).abs() < 1e-15);
        let metric = SpecDescriptor::new("metric")
            .with("a11", "1 + 0.2 cos(1,0)")
            .with("a22", "1 + 0.2 cos(1,0)")
            .build()
            .unwrap();
        assert!((metric.value(&Vec2::zeros(), &Vec2::new(1.0, 0.0)) - 0.6).abs() < 1e-15);
        let vf = SpecDescriptor::new("vector_field")
            .with("x1", "0.3")
            .with("x2", "0.2")
            .build()
            .unwrap();
        assert!(vf.value(&Vec2::new(0.7, 0.1), &Vec2::new(0.3, 0.2)).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_names_and_params() {
        assert!(matches!(
            SpecDescriptor::new("sphere").build(),
            Err(CatalogError::UnknownSpec(_))
        ));
        assert!(matches!(
            SpecDescriptor::new("pendulum").with("epsilon", 1).build(),
            Err(CatalogError::UnknownParam { .. })
        ));
        assert!(matches!(
            SpecDescriptor::new("pendulum").with("eps", "abc").build(),
            Err(CatalogError::BadNumber { .. })
        ));
        assert!(matches!(
            SpecDescriptor::new("vector_field").with("x1", "tan(1,0)").build(),
            Err(CatalogError::BadPoly(_))
        ));
    }

    #[test]
    fn label_lists_params() {
        let d = SpecDescriptor::new("pendulum").with("eps", 0.3);
        assert_eq!(d.label(), "pendulum{eps:0.3}");
    }
}
