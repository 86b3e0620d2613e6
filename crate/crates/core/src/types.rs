//! Shared domain model: geometry, cells, kinetic parameters and trajectories.
//!
//! Units are fixed throughout the crate: lengths in µm, times in min and
//! concentrations in nM. Nothing here converts units.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the domain, in µm.
pub type Point = [f64; 3];

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

/// Spherical domain `{r : |r| < L}` with absorbing boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Sphere radius `L` (µm).
    #[serde(rename = "L")]
    pub radius: f64,
    /// Diffusivity `D` (µm²/min).
    #[serde(rename = "D")]
    pub diffusivity: f64,
}

impl DomainSpec {
    pub fn new(radius: f64, diffusivity: f64) -> Result<Self> {
        let d = Self {
            radius,
            diffusivity,
        };
        if !(radius > 0.0 && diffusivity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "domain needs L > 0 and D > 0, got L = {radius}, D = {diffusivity}"
            )));
        }
        Ok(d)
    }

    pub fn contains(&self, p: &Point) -> bool {
        norm(p) < self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Sender,
    Receiver,
}

impl CellKind {
    /// Number of intracellular species: LuxI for senders, LacI/TetR for receivers.
    pub fn state_dim(self) -> usize {
        match self {
            CellKind::Sender => 1,
            CellKind::Receiver => 2,
        }
    }

    pub fn species_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Sender => &["LuxI"],
            CellKind::Receiver => &["LacI", "TetR"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Sender => "sender",
            CellKind::Receiver => "receiver",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub position: Point,
    pub kind: CellKind,
    /// Cell radius `R` (µm).
    #[serde(rename = "R")]
    pub radius: f64,
}

impl CellSpec {
    pub fn sender(position: Point, radius: f64) -> Self {
        Self {
            position,
            kind: CellKind::Sender,
            radius,
        }
    }

    pub fn receiver(position: Point, radius: f64) -> Self {
        Self {
            position,
            kind: CellKind::Receiver,
            radius,
        }
    }

    /// `V = 4πR³/3`.
    pub fn volume(&self) -> f64 {
        4.0 * PI * self.radius.powi(3) / 3.0
    }
}

/// Membrane exchange and AHL turnover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalParams {
    pub alpha: f64,
    pub a_u: f64,
    pub gamma_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenderParams {
    pub a_s: f64,
    pub gamma_s: f64,
}

/// Toggle-switch kinetics. Hill exponents are fixed at 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    pub a_r1: f64,
    pub a_r2: f64,
    pub gamma_r1: f64,
    pub gamma_r2: f64,
    /// LacI repression of TetR.
    #[serde(rename = "K_1")]
    pub k1: f64,
    /// TetR repression of LacI.
    #[serde(rename = "K_2")]
    pub k2: f64,
    /// AHL activation of TetR.
    #[serde(rename = "K_u")]
    pub k_u: f64,
}

/// Per-cell initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellState {
    pub x: Vec<f64>,
    #[serde(default)]
    pub u: f64,
}

/// Initial extracellular field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    #[default]
    Zero,
    /// `amplitude * sin(π|r|/L) / (π|r|/L)`, the slowest Dirichlet mode of the ball.
    Eigenmode { amplitude: f64 },
}

impl InitialField {
    pub fn value(&self, domain: &DomainSpec, p: &Point) -> f64 {
        match *self {
            InitialField::Zero => 0.0,
            InitialField::Eigenmode { amplitude } => {
                let r = norm(p);
                if r >= domain.radius {
                    return 0.0;
                }
                let k = PI * r / domain.radius;
                if k < 1e-12 {
                    amplitude
                } else {
                    amplitude * k.sin() / k
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub domain: DomainSpec,
    pub cells: Vec<CellSpec>,
    pub signal: SignalParams,
    pub sender: SenderParams,
    pub receiver: ReceiverParams,
    pub initial: Vec<CellState>,
    #[serde(default)]
    pub initial_field: InitialField,
}

impl SystemSpec {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_senders(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.kind == CellKind::Sender)
            .count()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.position).collect()
    }

    pub fn kinds(&self) -> Vec<CellKind> {
        self.cells.iter().map(|c| c.kind).collect()
    }

    /// The common cell volume. Errors if radii differ, since the gain matrix
    /// carries a single volume factor.
    pub fn common_volume(&self) -> Result<f64> {
        let first = self
            .cells
            .first()
            .ok_or_else(|| Error::InvalidSystem("no cells".into()))?;
        if self.cells.iter().any(|c| c.radius != first.radius) {
            return Err(Error::InvalidSystem(
                "the exchange volume V must be shared by all cells".into(),
            ));
        }
        Ok(first.volume())
    }

    pub fn stacked_initial_state(&self) -> Vec<f64> {
        self.initial.iter().flat_map(|s| s.x.iter().copied()).collect()
    }

    pub fn initial_signals(&self) -> Vec<f64> {
        self.initial.iter().map(|s| s.u).collect()
    }
}

/// `y_i`: the LuxI level for a sender (last state component), zero for a receiver.
pub fn output_map(kind: CellKind, state: &[f64]) -> Result<f64> {
    if state.len() != kind.state_dim() {
        return Err(Error::Dimension {
            expected: kind.state_dim(),
            got: state.len(),
        });
    }
    Ok(match kind {
        CellKind::Sender => state[state.len() - 1],
        CellKind::Receiver => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Domain(String),
    CellOutsideDomain { index: usize },
    CellOverlap { i: usize, j: usize, distance: f64 },
    Ordering { index: usize },
    NonPositiveRadius { index: usize },
    Parameter(String),
    InitialStateCount { expected: usize, got: usize },
    StateDimension { index: usize, expected: usize, got: usize },
    NonFinite(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Domain(m) => write!(f, "domain: {m}"),
            Violation::CellOutsideDomain { index } => {
                write!(f, "cell outside domain: cell {index} is not inside |r| < L - R")
            }
            Violation::CellOverlap { i, j, distance } => {
                write!(f, "cell overlap: cells {i} and {j} are {distance} µm apart")
            }
            Violation::Ordering { index } => {
                write!(f, "cell ordering: sender at index {index} follows a receiver")
            }
            Violation::NonPositiveRadius { index } => {
                write!(f, "cell radius: cell {index} has R <= 0")
            }
            Violation::Parameter(m) => write!(f, "parameter: {m}"),
            Violation::InitialStateCount { expected, got } => {
                write!(f, "initial state: {got} entries for {expected} cells")
            }
            Violation::StateDimension {
                index,
                expected,
                got,
            } => write!(
                f,
                "initial state: cell {index} has {got} species, expected {expected}"
            ),
            Violation::NonFinite(m) => write!(f, "non-finite value: {m}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        Err(Error::InvalidSystem(msgs.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    /// Accept cells closer than `R_i + R_j` as long as their centres differ.
    /// The point-source model stays well defined; only the no-contact
    /// assumption is relaxed.
    pub allow_contact: bool,
}

pub fn validate(spec: &SystemSpec) -> ValidationReport {
    validate_with(spec, ValidationOptions::default())
}

pub fn validate_with(spec: &SystemSpec, opts: ValidationOptions) -> ValidationReport {
    let mut v = Vec::new();
    let dom = &spec.domain;
    if !(dom.radius > 0.0 && dom.diffusivity > 0.0) {
        v.push(Violation::Domain(format!(
            "L = {}, D = {} must both be positive",
            dom.radius, dom.diffusivity
        )));
    }

    let s = &spec.signal;
    if !(s.alpha > 0.0 && s.a_u >= 0.0 && s.gamma_u >= 0.0) {
        v.push(Violation::Parameter(
            "signal needs alpha > 0, a_u >= 0, gamma_u >= 0".into(),
        ));
    }
    let sp = &spec.sender;
    if !(sp.a_s >= 0.0 && sp.gamma_s > 0.0) {
        v.push(Violation::Parameter(
            "sender needs a_s >= 0, gamma_s > 0".into(),
        ));
    }
    let r = &spec.receiver;
    let rp = [r.a_r1, r.a_r2, r.gamma_r1, r.gamma_r2, r.k1, r.k2, r.k_u];
    if rp.iter().any(|&p| !(p > 0.0)) {
        v.push(Violation::Parameter(
            "receiver parameters must all be strictly positive".into(),
        ));
    }

    let mut seen_receiver = false;
    for (i, c) in spec.cells.iter().enumerate() {
        if c.position.iter().any(|p| !p.is_finite()) {
            v.push(Violation::NonFinite(format!("position of cell {i}")));
            continue;
        }
        if !(c.radius > 0.0) {
            v.push(Violation::NonPositiveRadius { index: i });
        }
        if norm(&c.position) >= dom.radius - c.radius.max(0.0) {
            v.push(Violation::CellOutsideDomain { index: i });
        }
        match c.kind {
            CellKind::Receiver => seen_receiver = true,
            CellKind::Sender if seen_receiver => v.push(Violation::Ordering { index: i }),
            CellKind::Sender => {}
        }
    }

    // O(n²) pair scan; fine up to the few-thousand cell scale the dense
    // gain matrix supports anyway.
    for i in 0..spec.cells.len() {
        for j in (i + 1)..spec.cells.len() {
            let (a, b) = (&spec.cells[i], &spec.cells[j]);
            let d = distance(&a.position, &b.position);
            let contact = d <= a.radius + b.radius;
            if d == 0.0 || (contact && !opts.allow_contact) {
                v.push(Violation::CellOverlap { i, j, distance: d });
            }
        }
    }

    if spec.initial.len() != spec.cells.len() {
        v.push(Violation::InitialStateCount {
            expected: spec.cells.len(),
            got: spec.initial.len(),
        });
    } else {
        for (i, (c, st)) in spec.cells.iter().zip(&spec.initial).enumerate() {
            if st.x.len() != c.kind.state_dim() {
                v.push(Violation::StateDimension {
                    index: i,
                    expected: c.kind.state_dim(),
                    got: st.x.len(),
                });
            }
            if st.x.iter().chain(std::iter::once(&st.u)).any(|x| !x.is_finite()) {
                v.push(Violation::NonFinite(format!("initial state of cell {i}")));
            }
        }
    }

    ValidationReport { violations: v }
}

/// Sampled model output.
///
/// `states[k]` is the stacked intracellular state at `times[k]` (cells in
/// order, `kind.state_dim()` entries each); `signals[k]` holds every `u_i`;
/// `field_samples[k]`, when present, holds `v(t, ℓ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kinds: Vec<CellKind>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub signals: Vec<Vec<f64>>,
    pub field_samples: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn new(kinds: Vec<CellKind>, with_field: bool) -> Self {
        Self {
            kinds,
            times: Vec::new(),
            states: Vec::new(),
            signals: Vec::new(),
            field_samples: with_field.then(Vec::new),
        }
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>, signals: Vec<f64>, field: Option<Vec<f64>>) {
        self.times.push(t);
        self.states.push(state);
        self.signals.push(signals);
        if let (Some(fs), Some(f)) = (self.field_samples.as_mut(), field) {
            fs.push(f);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Offset of each cell's block in the stacked state.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.kinds.len());
        let mut acc = 0;
        for k in &self.kinds {
            off.push(acc);
            acc += k.state_dim();
        }
        off
    }

    pub fn cell_state(&self, sample: usize, cell: usize) -> &[f64] {
        let off = self.offsets()[cell];
        &self.states[sample][off..off + self.kinds[cell].state_dim()]
    }

    /// Time series of one species of one cell.
    pub fn species(&self, cell: usize, species: usize) -> Vec<f64> {
        let off = self.offsets()[cell] + species;
        self.states.iter().map(|s| s[off]).collect()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Checks the structural invariants (monotone times, consistent lengths).
    pub fn check(&self) -> Result<()> {
        let dim: usize = self.kinds.iter().map(|k| k.state_dim()).sum();
        let n = self.kinds.len();
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSystem("trajectory times not increasing".into()));
        }
        let bad = self.states.len() != self.times.len()
            || self.signals.len() != self.times.len()
            || self.states.iter().any(|s| s.len() != dim)
            || self.signals.iter().any(|s| s.len() != n)
            || self.field_samples.as_ref().is_some_and(|f| {
                f.len() != self.times.len() || f.iter().any(|s| s.len() != n)
            });
        if bad {
            return Err(Error::InvalidSystem("trajectory arrays inconsistent".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::paper_sec4;

    fn two_cell(receiver_at: Point) -> SystemSpec {
        let p = paper_sec4();
        SystemSpec {
            domain: DomainSpec::new(20.0, 2.0e4).unwrap(),
            cells: vec![
                CellSpec::sender([0.0; 3], 1.5),
                CellSpec::receiver(receiver_at, 1.5),
            ],
            signal: p.signal,
            sender: p.sender,
            receiver: p.receiver,
            initial: vec![
                CellState { x: vec![400.0], u: 0.0 },
                CellState { x: vec![300.0, 1.0], u: 0.0 },
            ],
            initial_field: InitialField::Zero,
        }
    }

    #[test]
    fn sec41_geometry_is_valid() {
        let r = validate(&two_cell([15.0, 0.0, 0.0]));
        assert!(r.is_valid(), "{:?}", r.violations);
    }

    #[test]
    fn cell_on_boundary_is_outside() {
        let r = validate(&two_cell([20.0, 0.0, 0.0]));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::CellOutsideDomain { index: 1 })));
        assert!(r.violations[0].to_string().contains("cell outside domain"));
    }

    #[test]
    fn identical_positions_overlap() {
        let r = validate(&two_cell([0.0; 3]));
        assert!(r
            .violations
            .iter()
            .any(|v| v.to_string().starts_with("cell overlap")));
        // Contact relaxation never admits coincident centres.
        let r = validate_with(&two_cell([0.0; 3]), ValidationOptions { allow_contact: true });
        assert!(!r.is_valid());
    }

    #[test]
    fn contact_can_be_relaxed() {
        let spec = two_cell([2.0, 0.0, 0.0]);
        assert!(!validate(&spec).is_valid());
        assert!(validate_with(&spec, ValidationOptions { allow_contact: true }).is_valid());
    }

    #[test]
    fn senders_must_come_first() {
        let mut spec = two_cell([15.0, 0.0, 0.0]);
        spec.cells.swap(0, 1);
        spec.initial.swap(0, 1);
        let r = validate(&spec);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Ordering { index: 1 })));
    }

    #[test]
    fn wrong_state_dimension_reported() {
        let mut spec = two_cell([15.0, 0.0, 0.0]);
        spec.initial[1].x = vec![1.0];
        assert!(validate(&spec)
            .violations
            .contains(&Violation::StateDimension { index: 1, expected: 2, got: 1 }));
    }

    #[test]
    fn validate_is_pure() {
        let spec = two_cell([0.5, 0.0, 0.0]);
        assert_eq!(validate(&spec), validate(&spec));
    }

    #[test]
    fn output_map_cases() {
        assert_eq!(output_map(CellKind::Sender, &[400.0]).unwrap(), 400.0);
        assert_eq!(output_map(CellKind::Receiver, &[300.0, 1.0]).unwrap(), 0.0);
        assert_eq!(output_map(CellKind::Sender, &[0.0]).unwrap(), 0.0);
        assert!(matches!(
            output_map(CellKind::Sender, &[1.0, 2.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let spec = two_cell([15.0, 0.0, 0.0]);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"L\":20.0"));
        let back: SystemSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }

    proptest::proptest! {
        #[test]
        fn output_map_linear_for_senders(x in 0.0f64..1e4, a in 0.0f64..10.0) {
            let lhs = output_map(CellKind::Sender, &[a * x]).unwrap();
            let rhs = a * output_map(CellKind::Sender, &[x]).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }
}
