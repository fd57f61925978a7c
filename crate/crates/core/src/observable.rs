//! Measured observable family: products of `X_phi` and identities on the
//! exiting photons, closed by `Z` on the final memory photon.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math;

/// Per-photon measurement operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliSlot {
    XPhi,
    Identity,
    Z,
}

impl PauliSlot {
    fn symbol(self) -> char {
        match self {
            PauliSlot::XPhi => 'X',
            PauliSlot::Identity => 'I',
            PauliSlot::Z => 'Z',
        }
    }
}

/// An observable `X_phi^a ... Z`, one operator per photon of the chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObservableSpec {
    slots: Vec<PauliSlot>,
}

impl ObservableSpec {
    /// Builds a spec, rejecting any `Z` outside the final position.
    pub fn new(slots: Vec<PauliSlot>) -> Result<Self> {
        let Some((&last, rest)) = slots.split_last() else {
            return Err(invalid!("observable must act on at least one photon"));
        };
        if last != PauliSlot::Z {
            return Err(invalid!("the final photon must be measured in Z"));
        }
        if rest.contains(&PauliSlot::Z) {
            return Err(invalid!("Z may only appear on the final photon"));
        }
        Ok(Self { slots })
    }

    /// `X_phi` on every photon except the last.
    pub fn all_x(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("observable must act on at least one photon"));
        }
        let mut slots = alloc::vec![PauliSlot::XPhi; n - 1];
        slots.push(PauliSlot::Z);
        Self::new(slots)
    }

    pub fn slots(&self) -> &[PauliSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Zero-based positions measured with `X_phi`.
    pub fn x_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == PauliSlot::XPhi)
            .map(|(i, _)| i)
    }

    /// Checks the spec against a chain of `n` photons.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.slots.len() != n {
            return Err(invalid!(
                "observable {} has {} slots but the chain has {n} photons",
                self,
                self.slots.len()
            ));
        }
        Ok(())
    }
}

impl fmt::Display for ObservableSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.slots {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for ObservableSpec {
    type Err = Error;

    /// Parses strings such as `"XIXZ"`.
    fn from_str(s: &str) -> Result<Self> {
        let slots = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(PauliSlot::XPhi),
                'I' => Ok(PauliSlot::Identity),
                'Z' => Ok(PauliSlot::Z),
                other => Err(invalid!("unknown observable symbol '{other}'")),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(slots)
    }
}

impl TryFrom<String> for ObservableSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObservableSpec> for String {
    fn from(spec: ObservableSpec) -> String {
        alloc::format!("{spec}")
    }
}

/// The seven visibility curves with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CurveKind {
    V2,
    V3,
    V4,
    V4p,
    V6,
    V6p,
    V6pp,
}

impl CurveKind {
    pub const ALL: [CurveKind; 7] = [
        CurveKind::V2,
        CurveKind::V3,
        CurveKind::V4,
        CurveKind::V4p,
        CurveKind::V6,
        CurveKind::V6p,
        CurveKind::V6pp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveKind::V2 => "V2",
            CurveKind::V3 => "V3",
            CurveKind::V4 => "V4",
            CurveKind::V4p => "V4p",
            CurveKind::V6 => "V6",
            CurveKind::V6p => "V6p",
            CurveKind::V6pp => "V6pp",
        }
    }

    pub fn observable_str(self) -> &'static str {
        match self {
            CurveKind::V2 => "XZ",
            CurveKind::V3 => "XXZ",
            CurveKind::V4 => "XXXZ",
            CurveKind::V4p => "XIXZ",
            CurveKind::V6 => "XXXXXZ",
            CurveKind::V6p => "XIXIXZ",
            CurveKind::V6pp => "XXIXXZ",
        }
    }

    pub fn observable(self) -> ObservableSpec {
        self.observable_str()
            .parse()
            .expect("built-in observables are well formed")
    }

    pub fn n_photons(self) -> usize {
        self.observable_str().len()
    }

    /// Curve kind whose observable equals `spec`, if any.
    pub fn for_observable(spec: &ObservableSpec) -> Option<CurveKind> {
        Self::ALL.into_iter().find(|k| k.observable() == *spec)
    }

    /// Unit-amplitude functional form, sign included.
    pub fn shape(self, phi: f64) -> f64 {
        let (c, s) = (math::cos(phi), math::sin(phi));
        match self {
            CurveKind::V2 => c,
            CurveKind::V3 => s * s,
            CurveKind::V4 => -c * s * s,
            CurveKind::V4p => c * c,
            CurveKind::V6 => -c * c * c * s * s,
            CurveKind::V6p => c * c * c,
            CurveKind::V6pp => s * s * s * s,
        }
    }

    /// Derivative of [`CurveKind::shape`] with respect to phi.
    pub fn shape_derivative(self, phi: f64) -> f64 {
        let (c, s) = (math::cos(phi), math::sin(phi));
        match self {
            CurveKind::V2 => -s,
            CurveKind::V3 => 2.0 * s * c,
            // d/dphi (-c s^2) = s^3 - 2 c^2 s
            CurveKind::V4 => s * s * s - 2.0 * c * c * s,
            CurveKind::V4p => -2.0 * c * s,
            // d/dphi (-c^3 s^2) = 3 c^2 s^3 - 2 c^4 s
            CurveKind::V6 => 3.0 * c * c * s * s * s - 2.0 * c * c * c * c * s,
            CurveKind::V6p => -3.0 * c * c * s,
            CurveKind::V6pp => 4.0 * s * s * s * c,
        }
    }

    /// Smallest period of the shape.
    pub fn period(self) -> f64 {
        match self {
            CurveKind::V3 | CurveKind::V4p | CurveKind::V6pp => math::PI,
            _ => math::TAU,
        }
    }

    /// True when `shape(phi + pi) == -shape(phi)`, so a negative amplitude
    /// can be absorbed into the phase offset.
    pub fn sign_absorbable(self) -> bool {
        self.period() == math::TAU
    }

    /// (min, max) of the unit-amplitude shape.
    pub fn shape_range(self) -> (f64, f64) {
        match self {
            CurveKind::V3 | CurveKind::V4p | CurveKind::V6pp => (0.0, 1.0),
            CurveKind::V2 | CurveKind::V6p => (-1.0, 1.0),
            CurveKind::V4 | CurveKind::V6 => {
                let e = crate::analytic::shape_extremum(self);
                (-e, e)
            }
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.replace('\'', "p").replace('′', "p").replace('″', "pp");
        Self::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| invalid!("unknown curve kind '{s}'"))
    }
}
