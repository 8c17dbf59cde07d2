use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_ic::BoundarySpec;

/// The four equations on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PdeKind {
    /// `u_t = eps2 u_xx - 2 (u^3 - u)`
    AllenCahn { eps2: f64 },
    /// `u_t = D u_xx + r u (1 - u)`
    FisherKpp { diffusion: f64, rate: f64 },
    /// `u_t = k u_xx`
    Heat { diffusivity: f64 },
    /// `u_tt = c^2 u_xx`
    Wave { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    pub equation: PdeKind,
    pub boundary: BoundarySpec,
}

impl PdeSpec {
    pub fn new(equation: PdeKind, boundary: BoundarySpec) -> Result<Self> {
        let spec = Self { equation, boundary };
        spec.validate()?;
        Ok(spec)
    }

    pub fn allen_cahn() -> Self {
        Self {
            equation: PdeKind::AllenCahn { eps2: 0.001 },
            boundary: BoundarySpec::Dirichlet { value: -1.0 },
        }
    }

    pub fn fisher_kpp() -> Self {
        Self {
            equation: PdeKind::FisherKpp {
                diffusion: 0.002,
                rate: 1.0,
            },
            boundary: BoundarySpec::Dirichlet { value: 0.0 },
        }
    }

    pub fn heat(boundary: BoundarySpec) -> Self {
        Self {
            equation: PdeKind::Heat { diffusivity: 0.01 },
            boundary,
        }
    }

    pub fn wave() -> Self {
        Self {
            equation: PdeKind::Wave { speed: 0.2 },
            boundary: BoundarySpec::Dirichlet { value: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.boundary.validate()?;
        let coefs: &[f64] = match &self.equation {
            PdeKind::AllenCahn { eps2 } => &[*eps2],
            PdeKind::FisherKpp { diffusion, rate } => &[*diffusion, *rate],
            PdeKind::Heat { diffusivity } => &[*diffusivity],
            PdeKind::Wave { speed } => &[*speed],
        };
        if coefs.iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("all coefficients of {self} must be positive")))
        }
    }

    pub fn is_second_order_in_time(&self) -> bool {
        matches!(self.equation, PdeKind::Wave { .. })
    }

    /// Coefficient in front of `u_xx` (`c^2` for the wave equation).
    pub fn diffusivity(&self) -> f64 {
        match self.equation {
            PdeKind::AllenCahn { eps2 } => eps2,
            PdeKind::FisherKpp { diffusion, .. } => diffusion,
            PdeKind::Heat { diffusivity } => diffusivity,
            PdeKind::Wave { speed } => speed * speed,
        }
    }

    /// Pointwise reaction term on the right-hand side.
    pub fn source(&self, u: f64) -> f64 {
        match self.equation {
            PdeKind::AllenCahn { .. } => -2.0 * (u * u * u - u),
            PdeKind::FisherKpp { rate, .. } => rate * u * (1.0 - u),
            PdeKind::Heat { .. } | PdeKind::Wave { .. } => 0.0,
        }
    }

    /// Scheme used for refined reference solutions.
    pub fn reference_scheme(&self) -> SchemeId {
        if self.is_second_order_in_time() {
            SchemeId::Leapfrog
        } else {
            SchemeId::Ftcs
        }
    }

    /// Classical baselines compared against the backend by default.
    pub fn default_baselines(&self) -> Vec<SchemeId> {
        match self.equation {
            PdeKind::AllenCahn { .. } | PdeKind::FisherKpp { .. } => vec![SchemeId::Ftcs, SchemeId::Imex],
            PdeKind::Heat { .. } => vec![SchemeId::Ftcs, SchemeId::Btcs],
            PdeKind::Wave { .. } => vec![SchemeId::Leapfrog, SchemeId::CrankNicolson],
        }
    }
}

impl fmt::Display for PdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.equation {
            PdeKind::AllenCahn { .. } => "Allen-Cahn",
            PdeKind::FisherKpp { .. } => "Fisher-KPP",
            PdeKind::Heat { .. } => "heat",
            PdeKind::Wave { .. } => "wave",
        };
        let bc = match self.boundary {
            BoundarySpec::Dirichlet { value } => format!("Dirichlet({value})"),
            BoundarySpec::NeumannHomogeneous => "Neumann".to_string(),
        };
        write!(f, "{name} [{bc}]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "FTCS")]
    Ftcs,
    #[serde(rename = "IMEX")]
    Imex,
    #[serde(rename = "BTCS")]
    Btcs,
    #[serde(rename = "Leapfrog")]
    Leapfrog,
    #[serde(rename = "CN")]
    CrankNicolson,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Ftcs,
        SchemeId::Imex,
        SchemeId::Btcs,
        SchemeId::Leapfrog,
        SchemeId::CrankNicolson,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeId::Ftcs => "FTCS",
            SchemeId::Imex => "IMEX",
            SchemeId::Btcs => "BTCS",
            SchemeId::Leapfrog => "Leapfrog",
            SchemeId::CrankNicolson => "CN",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::invalid(format!("unknown scheme {name:?}")))
    }

    /// IMEX is also accepted for the heat equation, where it coincides with
    /// BTCS.
    pub fn check_compatible(&self, pde: &PdeSpec) -> Result<()> {
        let ok = match (self, pde.equation) {
            (SchemeId::Ftcs, PdeKind::Wave { .. }) => false,
            (SchemeId::Ftcs, _) => true,
            (SchemeId::Imex, PdeKind::Wave { .. }) => false,
            (SchemeId::Imex, _) => true,
            (SchemeId::Btcs, PdeKind::Heat { .. }) => true,
            (SchemeId::Btcs, _) => false,
            (SchemeId::Leapfrog | SchemeId::CrankNicolson, PdeKind::Wave { .. }) => true,
            (SchemeId::Leapfrog | SchemeId::CrankNicolson, _) => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatibleScheme {
                scheme: self.name().into(),
                pde: pde.to_string(),
            })
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
