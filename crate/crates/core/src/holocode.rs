//! Stacked Steane-seeded codes on a ring, their translation networks and
//! transversal logical Cliffords, and the one-round Clifford protocol that
//! uses the stack as its resource.
//!
//! Every ring site may host several registers. A block's legs sit at seven
//! boundary sites; deeper layers stack a leg's descendants at its site.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::decompose::{assign_gates, GateFootprint, Half};
use crate::error::{Error, Result};
use crate::lattice::{quarter_regions, Region, Ring};
use crate::protocol::{audit, Fault, LocalityGuard, Party, Register, Transcript};
use crate::stab::{
    clean_logical, conjugate_through, generator_entropy, recoverable, CliffordGate, Pauli, StabilizerCode, Tableau,
};

/// The [[7,1,3]] seed code.
pub fn steane_seed() -> StabilizerCode {
    StabilizerCode::steane()
}

/// `layers`-fold concatenation of the seed, qubits grouped by top-level leg:
/// leg `j` owns qubits `j·7^{L−1} .. (j+1)·7^{L−1}`.
pub fn concatenated_steane(layers: usize) -> Result<StabilizerCode> {
    if layers == 0 {
        return Err(Error::Invalid("layers must be ≥ 1".into()));
    }
    let seed = steane_seed();
    let mut code = seed.clone();
    for _ in 1..layers {
        let m = code.n;
        let n = 7 * m;
        let place = |p: &Pauli, b: usize| p.embed(n, &(b * m..(b + 1) * m).collect::<Vec<_>>());
        let mut stabs = Vec::new();
        for b in 0..7 {
            stabs.extend(code.stabilizers.iter().map(|s| place(s, b)));
        }
        for s in &seed.stabilizers {
            let mut p = Pauli::identity(n);
            for b in 0..7 {
                if s.x.get(b) {
                    p = p.mul(&place(&code.logical_x[0], b));
                }
                if s.z.get(b) {
                    p = p.mul(&place(&code.logical_z[0], b));
                }
            }
            stabs.push(p);
        }
        code = StabilizerCode::new(stabs, vec![Pauli::x_on(n, 0..n)], vec![Pauli::z_on(n, 0..n)])?;
    }
    Ok(code)
}

/// Which transversal single-qubit gate realizes logical `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SConvention {
    /// `(S†)^⊗n` implements `S̄` (odd layer counts).
    DaggerTransversal,
    /// `S^⊗n` implements `S̄` (even layer counts).
    Transversal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoloCodeSpec {
    #[serde(default = "one")]
    pub layers: usize,
    /// Centered leg sites, in angular order; defaults from the ring size.
    #[serde(default)]
    pub boundary: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

impl Default for HoloCodeSpec {
    fn default() -> Self {
        HoloCodeSpec {
            layers: 1,
            boundary: None,
        }
    }
}

/// `{0, q−1, q, 2q−1, 3q−1, 3q, 4q−1}` with `q = n/4`: three legs hug each
/// pole of the W|E cut and two straddle each end of the N|S cut.
pub fn default_boundary(n_sites: usize) -> Vec<usize> {
    let q = n_sites / 4;
    vec![0, q - 1, q, 2 * q - 1, 3 * q - 1, 3 * q, 4 * q - 1]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoloCode {
    pub layers: usize,
    pub boundary: Vec<usize>,
    pub code: StabilizerCode,
    pub marked: usize,
    pub s_convention: SConvention,
}

impl HoloCode {
    pub fn new(spec: &HoloCodeSpec, n_sites: usize) -> Result<Self> {
        let boundary = spec.boundary.clone().unwrap_or_else(|| default_boundary(n_sites));
        if boundary.len() != 7 {
            return Err(Error::Invalid("a Steane block has 7 legs".into()));
        }
        if boundary.windows(2).any(|w| w[0] >= w[1]) || boundary.iter().any(|&s| s >= n_sites) {
            return Err(Error::Invalid(format!(
                "boundary sites {boundary:?} must be increasing and below {n_sites}"
            )));
        }
        let code = concatenated_steane(spec.layers)?;
        Ok(HoloCode {
            layers: spec.layers,
            boundary,
            code,
            marked: 0,
            s_convention: if spec.layers % 2 == 1 {
                SConvention::DaggerTransversal
            } else {
                SConvention::Transversal
            },
        })
    }

    pub fn qubits_per_leg(&self) -> usize {
        7usize.pow(self.layers as u32 - 1)
    }

    pub fn n(&self) -> usize {
        self.code.n
    }

    pub fn leg_of(&self, qubit: usize) -> usize {
        qubit / self.qubits_per_leg()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offset {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    #[serde(default)]
    pub code: HoloCodeSpec,
    pub offset: Offset,
    pub party: Party,
    /// Ancilla registers available for translations; `None` allocates exactly
    /// what the moves need.
    #[serde(default)]
    pub ancilla_budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub n_sites: usize,
    pub blocks: Vec<BlockConfig>,
}

impl StackConfig {
    /// `k` single-layer blocks alternating Alice/left and Bob/right.
    pub fn alternating(k: usize, n_sites: usize) -> Self {
        StackConfig {
            n_sites,
            blocks: (0..k)
                .map(|i| BlockConfig {
                    code: HoloCodeSpec::default(),
                    offset: if i % 2 == 0 { Offset::Left } else { Offset::Right },
                    party: if i % 2 == 0 { Party::Alice } else { Party::Bob },
                    ancilla_budget: None,
                })
                .collect(),
        }
    }
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig::alternating(2, 32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Left,
    Right,
    Center,
    North,
    South,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CenterHorizontal,
    North,
    South,
}

/// One leg move: every register of the leg swaps with an ancilla at `to`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Move {
    leg: usize,
    /// Registers holding the leg at the source layout, and the ancillas.
    pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub index: usize,
    pub party: Party,
    pub offset: Offset,
    pub code: HoloCode,
    /// Register currently holding each code qubit.
    pub data: Vec<usize>,
    pub layout: Layout,
    pub output: Direction,
    pub ancillas: Vec<usize>,
    h_moves: Vec<Move>,
    v_moves: Vec<Move>,
}

impl Block {
    pub fn output_layout(&self) -> Layout {
        match self.output {
            Direction::North => Layout::North,
            _ => Layout::South,
        }
    }
}

/// The resource: all blocks with their ancillas on one register file.
#[derive(Clone, Debug)]
pub struct Stack {
    pub n_sites: usize,
    pub blocks: Vec<Block>,
    pub registers: Vec<Register>,
}

fn half_of(ring: Ring, h: Half) -> Region {
    let q = quarter_regions(ring);
    h.region(&q).clone()
}

/// For legs outside `target` but one step from it: `(leg, from, to)`.
fn boundary_moves(ring: Ring, sites: &[usize], target: &Region) -> Vec<(usize, usize, usize)> {
    let n = ring.n_sites();
    sites
        .iter()
        .enumerate()
        .filter(|(_, &s)| !target.contains(s))
        .filter_map(|(leg, &s)| {
            [(s + 1) % n, (s + n - 1) % n]
                .into_iter()
                .find(|&t| target.contains(t))
                .map(|t| (leg, s, t))
        })
        .collect()
}

impl Stack {
    pub fn ring(&self) -> Ring {
        Ring::qubits(self.n_sites).expect("validated")
    }

    pub fn n_registers(&self) -> usize {
        self.registers.len()
    }

    pub fn register_sites(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.site.unwrap()).collect()
    }

    /// Registers whose site lies in `half`.
    pub fn registers_in(&self, half: Half) -> Vec<usize> {
        let h = half_of(self.ring(), half);
        (0..self.registers.len())
            .filter(|&r| h.contains(self.registers[r].site.unwrap()))
            .collect()
    }

    /// Block code on the full register file at its current layout.
    pub fn block_code(&self, b: usize) -> StabilizerCode {
        let blk = &self.blocks[b];
        let n = self.n_registers();
        let emb = |p: &Pauli| p.embed(n, &blk.data);
        StabilizerCode {
            n,
            stabilizers: blk.code.code.stabilizers.iter().map(emb).collect(),
            logical_x: blk.code.code.logical_x.iter().map(emb).collect(),
            logical_z: blk.code.code.logical_z.iter().map(emb).collect(),
        }
    }

    /// Whole-stack code: block codes plus `Z` on every ancilla, one logical per block.
    pub fn code(&self) -> StabilizerCode {
        let n = self.n_registers();
        let mut st = Vec::new();
        let (mut lx, mut lz) = (Vec::new(), Vec::new());
        for b in 0..self.blocks.len() {
            let c = self.block_code(b);
            st.extend(c.stabilizers);
            lx.extend(c.logical_x);
            lz.extend(c.logical_z);
            st.extend(self.blocks[b].ancillas.iter().map(|&a| Pauli::z_on(n, [a])));
        }
        StabilizerCode {
            n,
            stabilizers: st,
            logical_x: lx,
            logical_z: lz,
        }
    }

    /// Resource state: every block in `|0̄⟩`, ancillas in `|0⟩`.
    pub fn tableau(&self) -> Tableau {
        let c = self.code();
        let mut gens = c.stabilizers;
        gens.extend(c.logical_z);
        Tableau::from_stabilizers(gens).expect("stack code is consistent")
    }

    /// Is block `b`'s marked logical recoverable on `half` at its current layout?
    pub fn recoverable_on(&self, b: usize, half: Half) -> Result<bool> {
        recoverable(&self.block_code(b), &self.registers_in(half), self.blocks[b].code.marked)
    }

    /// Entropy (bits) of the resource across the W|E cut.
    pub fn cut_entropy(&self) -> usize {
        let t = self.tableau();
        generator_entropy(t.stabilizers(), &self.registers_in(Half::W))
    }

    fn moves_for(&self, b: usize, dir: Direction) -> Result<(&[Move], Layout, Layout)> {
        let blk = &self.blocks[b];
        let home = match blk.offset {
            Offset::Left => Layout::Left,
            Offset::Right => Layout::Right,
        };
        let (moves, a, z) = match dir {
            Direction::CenterHorizontal => (&blk.h_moves, home, Layout::Center),
            Direction::North | Direction::South => {
                if dir != blk.output {
                    return Err(Error::Invalid(format!(
                        "block {b} is laid out for {:?} translations",
                        blk.output
                    )));
                }
                (&blk.v_moves, Layout::Center, blk.output_layout())
            }
        };
        if blk.layout != a && blk.layout != z {
            return Err(Error::NotAligned(format!(
                "block {b} is at {:?}; {dir:?} translation needs {a:?} or {z:?}",
                blk.layout
            )));
        }
        Ok((moves, a, z))
    }

    /// Follows data/ancilla swaps of a translation network in the register
    /// bookkeeping. Transversal gates are not tracked: their swaps move
    /// logical information between blocks.
    pub fn track(&mut self, gates: &[CliffordGate]) {
        for g in gates {
            if let CliffordGate::Swap(a, c) = *g {
                for blk in self.blocks.iter_mut() {
                    for r in blk.data.iter_mut().chain(blk.ancillas.iter_mut()) {
                        if *r == a {
                            *r = c;
                        } else if *r == c {
                            *r = a;
                        }
                    }
                }
            }
        }
    }

    /// Translates block `b` (updating its layout) and returns the circuit.
    pub fn translate(&mut self, b: usize, dir: Direction) -> Result<(Vec<CliffordGate>, f64)> {
        let (gates, spread) = translate_circuit(self, b, dir)?;
        let (_, a, z) = self.moves_for(b, dir)?;
        let next = if self.blocks[b].layout == a { z } else { a };
        self.track(&gates);
        self.blocks[b].layout = next;
        Ok((gates, spread))
    }
}

/// Builds the resource and checks every block's half geometry.
pub fn build_stack(config: &StackConfig) -> Result<Stack> {
    if config.blocks.is_empty() {
        return Err(Error::Invalid("stack has no blocks".into()));
    }
    if config.n_sites % 4 != 0 || config.n_sites < 8 {
        return Err(Error::InvalidRing(format!(
            "{} sites: need a multiple of 4, at least 8",
            config.n_sites
        )));
    }
    let ring = Ring::qubits(config.n_sites)?;
    let mut registers: Vec<Register> = Vec::new();
    let mut blocks = Vec::new();
    for (bi, bc) in config.blocks.iter().enumerate() {
        let code = HoloCode::new(&bc.code, config.n_sites)?;
        let per = code.qubits_per_leg();
        let center = code.boundary.clone();
        let toward = match bc.offset {
            Offset::Left => half_of(ring, Half::W),
            Offset::Right => half_of(ring, Half::E),
        };
        let output = match bc.party {
            Party::Alice => Direction::North,
            Party::Bob => Direction::South,
        };
        let vertical = half_of(ring, if output == Direction::North { Half::N } else { Half::S });
        let h = boundary_moves(ring, &center, &toward);
        let v = boundary_moves(ring, &center, &vertical);
        let needed = (h.len() + v.len()) * per;
        if let Some(budget) = bc.ancilla_budget {
            if budget < needed {
                return Err(Error::InsufficientAncillas {
                    block: bi,
                    detail: format!("{needed} ancilla registers needed, budget {budget}"),
                });
            }
        }
        // Resource layout: legs at their offset positions.
        let mut leg_site = center.clone();
        for &(leg, _, to) in &h {
            leg_site[leg] = to;
        }
        let mut data = Vec::with_capacity(code.n());
        for q in 0..code.n() {
            let leg = code.leg_of(q);
            data.push(registers.len());
            registers.push(Register::lattice(format!("b{bi}.q{q}"), leg_site[leg]));
        }
        let mut ancillas = Vec::new();
        let mk = |site: usize, regs: &mut Vec<Register>, tag: String| {
            regs.push(Register::lattice(tag, site));
            regs.len() - 1
        };
        let mut h_moves = Vec::new();
        for &(leg, center_site, _) in &h {
            let mut pairs = Vec::new();
            for k in 0..per {
                let a = mk(center_site, &mut registers, format!("b{bi}.h{leg}.{k}"));
                ancillas.push(a);
                pairs.push((data[leg * per + k], a));
            }
            h_moves.push(Move { leg, pairs });
        }
        let mut v_moves = Vec::new();
        for &(leg, _, to) in &v {
            let mut pairs = Vec::new();
            for k in 0..per {
                let a = mk(to, &mut registers, format!("b{bi}.v{leg}.{k}"));
                ancillas.push(a);
                // Filled in once the horizontal moves are resolved below.
                pairs.push((leg * per + k, a));
            }
            v_moves.push(Move { leg, pairs });
        }
        // Vertical moves start from the centered layout: the register holding
        // the leg there is the h-ancilla if the leg moved horizontally.
        for mv in v_moves.iter_mut() {
            for p in mv.pairs.iter_mut() {
                let q = p.0;
                let centered = h_moves
                    .iter()
                    .flat_map(|m| m.pairs.iter())
                    .find(|(d, _)| *d == data[q])
                    .map(|(_, a)| *a)
                    .unwrap_or(data[q]);
                p.0 = centered;
            }
        }
        blocks.push(Block {
            index: bi,
            party: bc.party,
            offset: bc.offset,
            code,
            data,
            layout: match bc.offset {
                Offset::Left => Layout::Left,
                Offset::Right => Layout::Right,
            },
            output,
            ancillas,
            h_moves,
            v_moves,
        });
    }
    let stack = Stack {
        n_sites: config.n_sites,
        blocks,
        registers,
    };
    for (b, bc) in config.blocks.iter().enumerate() {
        let (mine, theirs, name) = match bc.party {
            Party::Alice => (Half::W, Half::E, "W"),
            Party::Bob => (Half::E, Half::W, "E"),
        };
        if !stack.recoverable_on(b, mine)? {
            return Err(Error::Geometry {
                block: b,
                half: name.into(),
            });
        }
        debug_assert!(!stack.recoverable_on(b, theirs)?);
    }
    Ok(stack)
}

/// SWAP network for one translation of block `b` and its measured spread.
/// The same network undoes itself.
pub fn translate_circuit(stack: &Stack, b: usize, dir: Direction) -> Result<(Vec<CliffordGate>, f64)> {
    if b >= stack.blocks.len() {
        return Err(Error::Invalid(format!("no block {b}")));
    }
    let (moves, _, _) = stack.moves_for(b, dir)?;
    let gates: Vec<CliffordGate> = moves
        .iter()
        .flat_map(|m| m.pairs.iter().map(|&(d, a)| CliffordGate::Swap(d, a)))
        .collect();
    let spread = circuit_spread(&gates, &stack.register_sites(), stack.n_sites);
    Ok((gates, spread))
}

/// Largest angular distance between a register and any register inside its
/// forward causal cone.
pub fn circuit_spread(gates: &[CliffordGate], register_sites: &[usize], n_sites: usize) -> f64 {
    let ring_steps = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(n_sites - d)
    };
    let mut touched: Vec<usize> = gates.iter().flat_map(|g| g.qubits()).collect();
    touched.sort_unstable();
    touched.dedup();
    let mut worst = 0;
    for &start in &touched {
        let mut reach = vec![false; register_sites.len()];
        reach[start] = true;
        for g in gates {
            let qs = g.qubits();
            if qs.iter().any(|&q| reach[q]) {
                for q in qs {
                    reach[q] = true;
                }
            }
        }
        for (r, &hit) in reach.iter().enumerate() {
            if hit {
                worst = worst.max(ring_steps(register_sites[start], register_sites[r]));
            }
        }
    }
    2.0 * PI * worst as f64 / n_sites as f64
}

/// Transversal physical circuit for a logical word (gate indices are block
/// indices). Blocks must be centered; two-block gates need aligned legs.
pub fn transversal_logical(stack: &Stack, word: &[CliffordGate]) -> Result<Vec<CliffordGate>> {
    let k = stack.blocks.len();
    let mut out = Vec::new();
    for g in word {
        for &b in &g.qubits() {
            if b >= k {
                return Err(Error::SupportOutOfRange { factor: b, n: k });
            }
            if stack.blocks[b].layout != Layout::Center {
                return Err(Error::NotAligned(format!(
                    "block {b} is at {:?}, not centered",
                    stack.blocks[b].layout
                )));
            }
        }
        let single = |b: usize| stack.blocks[b].data.clone();
        use CliffordGate::*;
        match *g {
            H(b) => out.extend(single(b).into_iter().map(H)),
            X(b) => out.extend(single(b).into_iter().map(X)),
            Y(b) => out.extend(single(b).into_iter().map(Y)),
            Z(b) => out.extend(single(b).into_iter().map(Z)),
            S(b) | Sdg(b) => {
                let dagger = matches!(g, S(_)) == (stack.blocks[b].code.s_convention == SConvention::DaggerTransversal);
                out.extend(single(b).into_iter().map(|q| if dagger { Sdg(q) } else { S(q) }));
            }
            Cnot(a, c) | Cz(a, c) | Swap(a, c) => {
                let (da, dc) = (single(a), single(c));
                if da.len() != dc.len() {
                    return Err(Error::NotAligned(format!("blocks {a} and {c} differ in size")));
                }
                for (&qa, &qc) in da.iter().zip(&dc) {
                    if stack.registers[qa].site != stack.registers[qc].site {
                        return Err(Error::NotAligned(format!(
                            "blocks {a} and {c}: registers {qa} and {qc} sit at different sites"
                        )));
                    }
                    out.push(match g {
                        Cnot(..) => Cnot(qa, qc),
                        Cz(..) => Cz(qa, qc),
                        _ => Swap(qa, qc),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `i^ph ∏_j X̄_j^{x_j} Z̄_j^{z_j}` for a Pauli on the logical register.
fn logical_to_physical(stack: &Stack, p: &Pauli) -> Pauli {
    let n = stack.n_registers();
    let mut out = Pauli::identity(n).mul_phase(p.phase);
    for (b, _) in stack.blocks.iter().enumerate() {
        let c = stack.block_code(b);
        if p.x.get(b) {
            out = out.mul(&c.logical_x[0]);
        }
        if p.z.get(b) {
            out = out.mul(&c.logical_z[0]);
        }
    }
    out
}

/// Does `physical` act on the stack code space as `word` does on the
/// logicals? Compared on conjugated logical generators, signs included.
pub fn logical_action_matches(stack: &Stack, word: &[CliffordGate], physical: &[CliffordGate]) -> Result<bool> {
    let k = stack.blocks.len();
    let code = stack.code();
    for b in 0..k {
        for letter in [1u8, 3] {
            let lp = Pauli::single(k, b, letter);
            let want = logical_to_physical(stack, &conjugate_through(word, &lp));
            let got = conjugate_through(physical, &logical_to_physical(stack, &lp));
            // got · want† must be +1 on the code space.
            let q = got.mul(&want.adjoint());
            match clean_logical(&code, &q, &[]) {
                Ok(Some(rep)) if rep.is_identity_up_to_phase() && rep.phase == 0 => {}
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

/// Single-qubit stabilizer input states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl InputState {
    pub const ALL: [InputState; 6] = [
        InputState::Zero,
        InputState::One,
        InputState::Plus,
        InputState::Minus,
        InputState::PlusI,
        InputState::MinusI,
    ];

    /// Stabilizer of the state on qubit `q` of an `n`-qubit register.
    pub fn stabilizer(&self, n: usize, q: usize) -> Pauli {
        let (k, neg) = match self {
            InputState::Zero => (3, false),
            InputState::One => (3, true),
            InputState::Plus => (1, false),
            InputState::Minus => (1, true),
            InputState::PlusI => (2, false),
            InputState::MinusI => (2, true),
        };
        let p = Pauli::single(n, q, k);
        if neg {
            p.mul_phase(2)
        } else {
            p
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "states", rename_all = "snake_case")]
pub enum ToyInputs {
    /// Inputs maximally entangled with reference qubits (channel check).
    Choi,
    Product(Vec<InputState>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyVerdict {
    pub logical_match: bool,
    pub paulis_checked: usize,
    pub mismatches: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToyRun {
    pub transcript: Transcript,
    pub verdict: ToyVerdict,
    /// Spread of each translation network, per block: (horizontal, vertical, composed).
    pub translation_spreads: Vec<(f64, f64, f64)>,
    pub dynamics_spread: f64,
    pub transversal_action_ok: bool,
    pub input_recoverable: Vec<bool>,
    pub output_recoverable: Vec<bool>,
    /// Recoverability on the opposite half (input and output); all false in a sound run.
    pub opposite_recoverable: Vec<bool>,
    pub piece_gate_counts: [usize; 4],
}

fn controlled_pauli(control: usize, p: &Pauli) -> Vec<CliffordGate> {
    use CliffordGate::*;
    let mut out = Vec::new();
    for q in p.support() {
        match p.letter(q) {
            1 => out.push(Cnot(control, q)),
            3 => out.push(Cz(control, q)),
            _ => out.extend([Sdg(q), Cnot(control, q), S(q)]),
        }
    }
    if p.hermitian_sign() == Some(1) {
        out.push(Z(control));
    }
    out
}

/// Logical SWAP between private qubit `a` and a logical with representatives
/// `x`, `z`: CNOT(a→L) · CNOT(L→a) · CNOT(a→L).
fn logical_swap(a: usize, x: &Pauli, z: &Pauli) -> Vec<CliffordGate> {
    let mut g = controlled_pauli(a, x);
    g.push(CliffordGate::H(a));
    g.extend(controlled_pauli(a, z));
    g.push(CliffordGate::H(a));
    g.extend(controlled_pauli(a, x));
    g
}

fn widen(p: &Pauli, n: usize) -> Pauli {
    p.embed(n, &(0..p.n()).collect::<Vec<_>>())
}

/// Runs the one-round Clifford protocol on the stack resource.
///
/// Logical `i` enters through party `blocks[i].party`'s private register,
/// is swapped into block `i` on that party's input half, processed by the
/// translated transversal circuit split into four pieces, and swapped out on
/// the party's output half.
pub fn run_toy_protocol(
    config: &StackConfig,
    target: &[CliffordGate],
    inputs: &ToyInputs,
    fault: Option<Fault>,
) -> Result<ToyRun> {
    let mut stack = build_stack(config)?;
    let k = stack.blocks.len();
    let ring = stack.ring();
    let initial = stack.clone();
    if let ToyInputs::Product(v) = inputs {
        if v.len() != k {
            return Err(Error::DimensionMismatch(format!("{} inputs for {k} logicals", v.len())));
        }
    }

    // Plan the dynamics U = T_v · transversal · T_h.
    let mut h_all = Vec::new();
    let mut spreads = Vec::new();
    for b in 0..k {
        let (g, s) = stack.translate(b, Direction::CenterHorizontal)?;
        spreads.push(s);
        h_all.push(g);
    }
    let phys = transversal_logical(&stack, target)?;
    let transversal_action_ok = logical_action_matches(&stack, target, &phys)?;
    let mut v_all = Vec::new();
    let sites = stack.register_sites();
    let mut translation_spreads = Vec::new();
    for b in 0..k {
        let dir = stack.blocks[b].output;
        let (g, s) = stack.translate(b, dir)?;
        let mut both = h_all[b].clone();
        both.extend(g.iter().copied());
        translation_spreads.push((spreads[b], s, circuit_spread(&both, &sites, stack.n_sites)));
        v_all.push(g);
    }
    let u: Vec<CliffordGate> = h_all
        .into_iter()
        .flatten()
        .chain(phys.iter().copied())
        .chain(v_all.into_iter().flatten())
        .collect();
    let dynamics_spread = circuit_spread(&u, &sites, stack.n_sites);
    let final_stack = stack;

    // Representatives on the input (W/E) and output (N/S) halves.
    let in_half = |p: Party| if p == Party::Alice { Half::W } else { Half::E };
    let out_half = |p: Party| if p == Party::Alice { Half::N } else { Half::S };
    let mut input_recoverable = Vec::new();
    let mut output_recoverable = Vec::new();
    let mut opposite = Vec::new();
    let mut in_reps = Vec::new();
    let mut out_reps = Vec::new();
    for b in 0..k {
        let p = initial.blocks[b].party;
        input_recoverable.push(initial.recoverable_on(b, in_half(p))?);
        opposite.push(initial.recoverable_on(b, in_half(p).far())?);
        output_recoverable.push(final_stack.recoverable_on(b, out_half(p))?);
        opposite.push(final_stack.recoverable_on(b, out_half(p).far())?);
        let ci = initial.block_code(b);
        let co = final_stack.block_code(b);
        let ri = initial.registers_in(in_half(p));
        let ro = final_stack.registers_in(out_half(p));
        let clean = |c: &StabilizerCode, l: &Pauli, r: &[usize]| -> Result<Pauli> {
            clean_logical(c, l, r)?.ok_or_else(|| Error::Geometry {
                block: b,
                half: format!("{:?}", in_half(p)),
            })
        };
        let cross = fault == Some(Fault::CrossHalfEncoder) && p == Party::Alice;
        in_reps.push(if cross {
            (ci.logical_x[0].clone(), ci.logical_z[0].clone())
        } else {
            (clean(&ci, &ci.logical_x[0], &ri)?, clean(&ci, &ci.logical_z[0], &ri)?)
        });
        let message = fault == Some(Fault::OverlappingMessage) && p == Party::Bob;
        out_reps.push(if message {
            (co.logical_x[0].clone(), co.logical_z[0].clone())
        } else {
            (clean(&co, &co.logical_x[0], &ro)?, clean(&co, &co.logical_z[0], &ro)?)
        });
    }

    // Four-piece split of U.
    let footprints: Vec<GateFootprint> = u
        .iter()
        .map(|g| GateFootprint {
            registers: g.qubits(),
            sites: g.qubits().iter().map(|&q| sites[q]).collect(),
        })
        .collect();
    let halves = assign_gates(&footprints, ring)?;
    let piece = |h: Half| -> Vec<CliffordGate> {
        u.iter().zip(&halves).filter(|(_, &x)| x == h).map(|(g, _)| *g).collect()
    };
    let (uw, ue, un, us) = (piece(Half::W), piece(Half::E), piece(Half::N), piece(Half::S));

    // Registers: stack, then per logical input, output and reference.
    let n_stack = initial.n_registers();
    let mut registers = initial.registers.clone();
    let mut a_reg = Vec::new();
    let mut o_reg = Vec::new();
    let mut r_reg = Vec::new();
    for b in 0..k {
        let p = initial.blocks[b].party;
        a_reg.push(registers.len());
        registers.push(Register::private(format!("in{b}"), p));
        o_reg.push(registers.len());
        registers.push(Register::private(format!("out{b}"), p));
        if matches!(inputs, ToyInputs::Choi) {
            r_reg.push(registers.len());
            registers.push(Register::reference(format!("ref{b}")));
        }
    }
    let n = registers.len();
    let mut gens: Vec<Pauli> = initial.tableau().stabilizers().iter().map(|g| widen(g, n)).collect();
    for b in 0..k {
        match inputs {
            ToyInputs::Choi => {
                gens.push(Pauli::x_on(n, [a_reg[b], r_reg[b]]));
                gens.push(Pauli::z_on(n, [a_reg[b], r_reg[b]]));
            }
            ToyInputs::Product(v) => gens.push(v[b].stabilizer(n, a_reg[b])),
        }
        gens.push(Pauli::z_on(n, [o_reg[b]]));
    }
    let mut tab = Tableau::from_stabilizers(gens)?;
    let mut guard = LocalityGuard::new(ring, registers);

    let mut run = |guard: &mut LocalityGuard, party: Party, label: &str, gates: &[CliffordGate]| -> Result<()> {
        for (i, g) in gates.iter().enumerate() {
            guard.record(party, format!("{label} #{i} {g:?}"), &g.qubits())?;
            tab.apply(g)?;
        }
        Ok(())
    };
    let widen_rep = |p: &Pauli| widen(p, n);
    for party in [Party::Alice, Party::Bob] {
        for b in (0..k).filter(|&b| initial.blocks[b].party == party) {
            let (x, z) = &in_reps[b];
            run(&mut guard, party, &format!("encode {b}"), &logical_swap(a_reg[b], &widen_rep(x), &widen_rep(z)))?;
        }
        if party == Party::Alice && fault == Some(Fault::EarlyPost) {
            run(&mut guard, party, "U_N", &un)?;
        }
        let pre = if party == Party::Alice { &uw } else { &ue };
        run(&mut guard, party, if party == Party::Alice { "U_W" } else { "U_E" }, pre)?;
    }
    guard.exchange()?;
    for party in [Party::Alice, Party::Bob] {
        let post = if party == Party::Alice { &un } else { &us };
        run(&mut guard, party, if party == Party::Alice { "U_N" } else { "U_S" }, post)?;
        for b in (0..k).filter(|&b| initial.blocks[b].party == party) {
            let (x, z) = &out_reps[b];
            run(&mut guard, party, &format!("decode {b}"), &logical_swap(o_reg[b], &widen_rep(x), &widen_rep(z)))?;
        }
    }
    let transcript = guard.finish(o_reg.clone())?;
    audit(&transcript)?;
    debug_assert!(n_stack + k * if r_reg.is_empty() { 2 } else { 3 } == n);

    let verdict = toy_verdict(&tab, target, inputs, &o_reg, &r_reg, k, n);
    Ok(ToyRun {
        transcript,
        verdict,
        translation_spreads,
        dynamics_spread,
        transversal_action_ok,
        input_recoverable,
        output_recoverable,
        opposite_recoverable: opposite,
        piece_gate_counts: [un.len(), us.len(), uw.len(), ue.len()],
    })
}

/// Compares output registers against the target acting on the inputs.
fn toy_verdict(
    tab: &Tableau,
    target: &[CliffordGate],
    inputs: &ToyInputs,
    o_reg: &[usize],
    r_reg: &[usize],
    k: usize,
    n: usize,
) -> ToyVerdict {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    match inputs {
        ToyInputs::Choi => {
            // (1 ⊗ C)|Φ⁺⟩ is stabilized by P_ref ⊗ C P C† for P ∈ {X_i, Z_i}.
            for b in 0..k {
                for letter in [1u8, 3] {
                    let lp = Pauli::single(k, b, letter);
                    let img = conjugate_through(target, &lp);
                    let mut phys = img.embed(n, o_reg);
                    phys = phys.mul(&Pauli::single(k, b, letter).embed(n, r_reg));
                    checked += 1;
                    let e = tab.expectation(&phys);
                    if (e.re - 1.0).abs() > 0.0 || e.im != 0.0 {
                        mismatches.push(format!("{phys}: {e}"));
                    }
                }
            }
        }
        ToyInputs::Product(states) => {
            let mut expect = Tableau::from_stabilizers((0..k).map(|b| states[b].stabilizer(k, b)).collect())
                .expect("product stabilizers");
            expect.apply_all(target).expect("target in range");
            for idx in 0..4usize.pow(k as u32) {
                let mut p = Pauli::identity(k);
                let mut rest = idx;
                for b in 0..k {
                    let l = (rest % 4) as u8;
                    rest /= 4;
                    p = p.mul(&Pauli::single(k, b, l));
                }
                checked += 1;
                let want = expect.expectation(&p);
                let got = tab.expectation(&p.embed(n, o_reg));
                if want != got {
                    mismatches.push(format!("{p}: want {want}, got {got}"));
                }
            }
        }
    }
    ToyVerdict {
        logical_match: mismatches.is_empty(),
        paulis_checked: checked,
        mismatches,
    }
}
