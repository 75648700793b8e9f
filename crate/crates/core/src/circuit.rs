//! Exact gate synthesis of Pauli-string exponentials and a plain-text
//! circuit format.
//!
//! `exp(iϑP)` is built from a basis-change layer (H on σ₁ slots, Y on σ₂
//! slots), a CNOT ladder that collects the parity of the support onto its
//! highest qubit, `R3(ϑ)` on that qubit, and the mirrored ladder and
//! basis-change layer.
//!
//! A circuit's unitary is the product of its gate matrices in list order,
//! `G₁·G₂···G_k`. With this convention the basis change `[H, …, Hdag]`
//! evaluates to `H·M·H†`, and a concatenation of term circuits evaluates to the
//! same ordered product as [`embed_local`](crate::algebra::embed_local).

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::algebra::{HorizontalBasis, PauliString};
use crate::error::{GeoqcError, Result};
use crate::linalg::{ComplexMatrix, I, ONE, ZERO};

/// Coefficients with magnitude below this are dropped by default.
pub const DEFAULT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Cnot {
        control: usize,
        target: usize,
    },
    /// `exp(iϑσ₃) = diag(e^{iϑ}, e^{−iϑ})`.
    R3 {
        qubit: usize,
        angle: f64,
    },
    /// Hadamard, `(1/√2)[[1, 1], [1, −1]]`.
    H(usize),
    Hdag(usize),
    /// `(1/√2)[[1, i], [i, 1]] = (I + iσ₁)/√2`. This is not the Pauli-Y gate;
    /// it satisfies `Y σ₃ Y† = σ₂`.
    Y(usize),
    Ydag(usize),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Cnot { control, target } => vec![control, target],
            Gate::R3 { qubit, .. } | Gate::H(qubit) | Gate::Hdag(qubit) | Gate::Y(qubit) | Gate::Ydag(qubit) => {
                vec![qubit]
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Some(q) = self.qubits().into_iter().find(|&q| q >= n) {
            return Err(GeoqcError::InvalidInput(format!(
                "gate {self} uses qubit {q}, circuit has {n}"
            )));
        }
        match *self {
            Gate::Cnot { control, target } if control == target => Err(GeoqcError::InvalidInput(format!(
                "CNOT control and target are both q{control}"
            ))),
            Gate::R3 { angle, .. } if !angle.is_finite() => {
                Err(GeoqcError::InvalidInput(format!("non-finite rotation angle {angle}")))
            }
            _ => Ok(()),
        }
    }

    fn single_qubit_matrix(&self) -> Option<(usize, [Complex64; 4])> {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let si = Complex64::new(0.0, FRAC_1_SQRT_2);
        Some(match *self {
            Gate::R3 { qubit, angle } => (
                qubit,
                [
                    Complex64::from_polar(1.0, angle),
                    ZERO,
                    ZERO,
                    Complex64::from_polar(1.0, -angle),
                ],
            ),
            Gate::H(q) | Gate::Hdag(q) => (q, [s, s, s, -s]),
            Gate::Y(q) => (q, [s, si, si, s]),
            Gate::Ydag(q) => (q, [s, -si, -si, s]),
            Gate::Cnot { .. } => return None,
        })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Cnot { control, target } => write!(f, "CNOT q{control} q{target}"),
            Gate::R3 { qubit, angle } => write!(f, "R3 q{qubit} {angle:.16e}"),
            Gate::H(q) => write!(f, "H q{q}"),
            Gate::Hdag(q) => write!(f, "HDAG q{q}"),
            Gate::Y(q) => write!(f, "Y q{q}"),
            Gate::Ydag(q) => write!(f, "YDAG q{q}"),
        }
    }
}

fn parse_qubit(tok: Option<&str>, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing qubit operand"))?;
    tok.strip_prefix('q')
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(line, &format!("bad qubit operand {tok:?}")))
}

fn parse_err(line: usize, message: &str) -> GeoqcError {
    GeoqcError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_gate(text: &str, line: usize) -> Result<Gate> {
    let mut tok = text.split_whitespace();
    let name = tok.next().ok_or_else(|| parse_err(line, "empty gate line"))?;
    let gate = match name {
        "CNOT" => Gate::Cnot {
            control: parse_qubit(tok.next(), line)?,
            target: parse_qubit(tok.next(), line)?,
        },
        "R3" => {
            let qubit = parse_qubit(tok.next(), line)?;
            let angle = tok
                .next()
                .and_then(|a| a.parse::<f64>().ok())
                .ok_or_else(|| parse_err(line, "missing or malformed angle"))?;
            Gate::R3 { qubit, angle }
        }
        "H" => Gate::H(parse_qubit(tok.next(), line)?),
        "HDAG" => Gate::Hdag(parse_qubit(tok.next(), line)?),
        "Y" => Gate::Y(parse_qubit(tok.next(), line)?),
        "YDAG" => Gate::Ydag(parse_qubit(tok.next(), line)?),
        other => return Err(parse_err(line, &format!("unknown gate {other:?}"))),
    };
    if tok.next().is_some() {
        return Err(parse_err(line, "trailing operands"));
    }
    Ok(gate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub cnot: usize,
    pub r3: usize,
    pub basis_change: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(GeoqcError::InvalidInput("circuit needs at least one qubit".into()));
        }
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Self { n_qubits, gates })
    }

    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(GeoqcError::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                Gate::Cnot { .. } => c.cnot += 1,
                Gate::R3 { .. } => c.r3 += 1,
                _ => c.basis_change += 1,
            }
        }
        c
    }
}

/// Full 2ⁿ×2ⁿ matrix of `g`, qubit 0 being the most significant bit.
pub fn gate_matrix(g: &Gate, n: usize) -> Result<ComplexMatrix> {
    g.validate(n)?;
    let d = 1usize << n;
    let bit = |q: usize| 1usize << (n - 1 - q);
    Ok(match g.single_qubit_matrix() {
        Some((q, u)) => {
            let b = bit(q);
            ComplexMatrix::from_fn(d, |r, c| {
                if (r & !b) != (c & !b) {
                    return ZERO;
                }
                let (i, j) = (usize::from(r & b != 0), usize::from(c & b != 0));
                u[2 * i + j]
            })
        }
        None => {
            let Gate::Cnot { control, target } = *g else {
                unreachable!()
            };
            let (cb, tb) = (bit(control), bit(target));
            ComplexMatrix::from_fn(d, |r, c| {
                let image = if c & cb != 0 { c ^ tb } else { c };
                if r == image {
                    ONE
                } else {
                    ZERO
                }
            })
        }
    })
}

/// Ordered product `G₁·G₂···G_k` of the gate matrices.
pub fn circuit_unitary(c: &Circuit) -> Result<ComplexMatrix> {
    let d = 1usize << c.n_qubits;
    let mut u = ComplexMatrix::identity(d);
    for g in &c.gates {
        u = u.matmul(&gate_matrix(g, c.n_qubits)?);
    }
    Ok(u)
}

/// Circuit for `exp(iϑP)`.
pub fn synthesize_exponential(p: &PauliString, theta: f64) -> Result<Circuit> {
    if p.is_identity() {
        return Err(GeoqcError::InvalidInput("cannot synthesize the identity string".into()));
    }
    if !theta.is_finite() {
        return Err(GeoqcError::InvalidInput(format!("non-finite angle {theta}")));
    }
    let support = p.support();
    let last = *support.last().expect("non-identity");
    let slots = p.slots();

    let mut gates = Vec::with_capacity(4 * support.len());
    for &q in &support {
        match slots[q] {
            1 => gates.push(Gate::H(q)),
            2 => gates.push(Gate::Y(q)),
            _ => {}
        }
    }
    let ladder: Vec<Gate> = support
        .windows(2)
        .map(|w| Gate::Cnot {
            control: w[0],
            target: w[1],
        })
        .collect();
    gates.extend(ladder.iter().copied());
    gates.push(Gate::R3 {
        qubit: last,
        angle: theta,
    });
    gates.extend(ladder.iter().rev().copied());
    for &q in &support {
        match slots[q] {
            1 => gates.push(Gate::Hdag(q)),
            2 => gates.push(Gate::Ydag(q)),
            _ => {}
        }
    }
    Circuit::new(p.n_qubits(), gates)
}

/// ϑ with `exp(c·τ_P) = exp(iϑP)`, i.e. `c/√d`.
pub fn coefficient_to_angle(c: f64, n: usize) -> f64 {
    c / ((1u64 << n) as f64).sqrt()
}

/// Concatenated term circuits of `exp(c_1τ_1)···exp(c_mτ_m)`, skipping
/// terms below [`DEFAULT_CUTOFF`].
pub fn synthesize_coefficients(c: &[f64], basis: &HorizontalBasis) -> Result<Circuit> {
    synthesize_coefficients_with_cutoff(c, basis, DEFAULT_CUTOFF)
}

pub fn synthesize_coefficients_with_cutoff(c: &[f64], basis: &HorizontalBasis, cutoff: f64) -> Result<Circuit> {
    if c.len() != basis.len() {
        return Err(GeoqcError::DimensionMismatch {
            expected: basis.len(),
            found: c.len(),
        });
    }
    let n = basis.n_qubits();
    let mut circuit = Circuit::empty(n);
    for (p, &ci) in basis.elements().iter().zip(c) {
        if ci.abs() >= cutoff && ci != 0.0 {
            circuit.append(&synthesize_exponential(p, coefficient_to_angle(ci, n))?)?;
        }
    }
    Ok(circuit)
}

/// Circuit for `embed_global(rows)`: segment circuits in row order.
pub fn synthesize_segments(rows: &[Vec<f64>], basis: &HorizontalBasis, cutoff: f64) -> Result<Circuit> {
    let mut circuit = Circuit::empty(basis.n_qubits());
    for row in rows {
        circuit.append(&synthesize_coefficients_with_cutoff(row, basis, cutoff)?)?;
    }
    Ok(circuit)
}

pub const CIRCUIT_HEADER: &str = "# geoqc-circuit v1";

pub fn emit_circuit_text(c: &Circuit) -> String {
    let mut out = format!("{CIRCUIT_HEADER} n={}\n", c.n_qubits);
    for g in &c.gates {
        out.push_str(&g.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_circuit_text(text: &str) -> Result<Circuit> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty circuit text"))?;
    let n: usize = header
        .strip_prefix(CIRCUIT_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("n="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(1, &format!("expected header \"{CIRCUIT_HEADER} n=<n>\"")))?;
    let mut gates = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let gate = parse_gate(line, i + 1)?;
        gate.validate(n).map_err(|e| parse_err(i + 1, &e.to_string()))?;
        gates.push(gate);
    }
    Circuit::new(n, gates)
}

impl FromStr for Circuit {
    type Err = GeoqcError;

    fn from_str(s: &str) -> Result<Self> {
        parse_circuit_text(s)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_circuit_text(self))
    }
}

/// `cos ϑ·I + i sin ϑ·P`.
pub fn pauli_exponential(p: &PauliString, theta: f64) -> ComplexMatrix {
    let pm = crate::algebra::pauli_matrix(p);
    let d = pm.dim();
    let mut out = ComplexMatrix::identity(d).scale(Complex64::new(theta.cos(), 0.0));
    out.add_scaled(I * theta.sin(), &pm);
    out
}
