//! Dense execution of the pseudo-bulk dynamics and of the two-party protocol
//! built from a quarter decomposition.

use serde::{Deserialize, Serialize};

use super::harness::{audit, Fault, LocalityGuard, Party, Register, Transcript};
use crate::decompose::{Half, QuarterDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{self, quarter_regions, ModelSpec, Region, Ring};
use crate::qcore::linalg::{self, C64};
use crate::qcore::{self, partial_trace, tensor, CMat, Channel, DenseOperator, StateVector};

/// A slot a party-local map reads or writes: the party's input, a ring site
/// (of the system copy), or the party's output register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Port {
    Input,
    Site(usize),
    Output,
}

/// A channel from the `inputs` ports to the `outputs` ports. Ports only in
/// `outputs` start in `|0⟩`; ports only in `inputs` are discarded.
#[derive(Clone, Debug)]
pub struct LocalMap {
    pub label: String,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
    pub channel: Channel,
}

impl LocalMap {
    pub fn sites(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .inputs
            .iter()
            .chain(&self.outputs)
            .filter_map(|p| match p {
                Port::Site(k) => Some(*k),
                _ => None,
            })
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// SWAP of the input with site `c`; the old site content stays behind in
    /// the input register.
    pub fn swap_in(site: usize, d: usize) -> Self {
        LocalMap {
            label: format!("swap-in@{site}"),
            inputs: vec![Port::Input, Port::Site(site)],
            outputs: vec![Port::Input, Port::Site(site)],
            channel: Channel::unitary(vec![d, d], linalg::swap_qudits(d)).expect("swap is unitary"),
        }
    }

    /// Moves site `c` into the (fresh) output register.
    pub fn swap_out(site: usize, d: usize) -> Self {
        LocalMap {
            label: format!("swap-out@{site}"),
            inputs: vec![Port::Site(site), Port::Output],
            outputs: vec![Port::Site(site), Port::Output],
            channel: Channel::unitary(vec![d, d], linalg::swap_qudits(d)).expect("swap is unitary"),
        }
    }

    /// Discards site `c` and prepares the output in `|0⟩`.
    pub fn trace_and_replace(site: usize, d: usize) -> Self {
        let kraus = (0..d)
            .map(|i| {
                let mut k = CMat::zeros(d, d);
                k[(0, i)] = C64::new(1.0, 0.0);
                k
            })
            .collect();
        LocalMap {
            label: format!("reset@{site}"),
            inputs: vec![Port::Site(site)],
            outputs: vec![Port::Output],
            channel: Channel::new(vec![d], vec![d], kraus).expect("complete"),
        }
    }

    fn port_dims(&self, ports: &[Port], ring: Ring, d_in: usize, d_out: usize) -> Vec<usize> {
        ports
            .iter()
            .map(|p| match p {
                Port::Input => d_in,
                Port::Site(_) => ring.local_dim(),
                Port::Output => d_out,
            })
            .collect()
    }

    fn check(&self, ring: Ring, d_in: usize, d_out: usize, allowed: &Region, half: &str) -> Result<()> {
        if self.port_dims(&self.inputs, ring, d_in, d_out) != self.channel.input_dims()
            || self.port_dims(&self.outputs, ring, d_in, d_out) != self.channel.output_dims()
        {
            return Err(Error::DimensionMismatch(format!("{}: port dims vs channel dims", self.label)));
        }
        for s in self.sites() {
            if s >= ring.n_sites() || !allowed.contains(s) {
                return Err(Error::Invalid(format!("{}: site {s} is outside the {half} half", self.label)));
            }
        }
        Ok(())
    }
}

/// Definition data of the pseudo-bulk dynamics.
#[derive(Clone, Debug)]
pub struct PseudoBulkSpec {
    pub ring: Ring,
    pub model: ModelSpec,
    /// Resource state on the ring.
    pub resource: StateVector,
    pub encoder_a: LocalMap,
    pub encoder_b: LocalMap,
    pub decoder_a: LocalMap,
    pub decoder_b: LocalMap,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Evolution time, in the units of the light-cone fit.
    pub tau: f64,
}

/// Designated swap sites: the site of `W∩N` nearest angle −π/4 and the site
/// of `E∩S` nearest 3π/4.
pub fn designated_sites(ring: Ring) -> (usize, usize) {
    let q = quarter_regions(ring);
    let n = ring.n_sites() as f64;
    let pick = |r: Region, target: f64| {
        r.sites()
            .into_iter()
            .min_by(|&a, &b| ((a as f64) - target).abs().total_cmp(&((b as f64) - target).abs()))
            .expect("quarters are nonempty")
    };
    (pick(q.w.intersection(&q.n), 7.0 * n / 8.0), pick(q.e.intersection(&q.s), 3.0 * n / 8.0))
}

impl PseudoBulkSpec {
    /// Swap-in/swap-out encoders and decoders at the designated sites, with
    /// the resource state `|0…0⟩`.
    pub fn swap_default(ring: Ring, model: ModelSpec) -> Self {
        let d = ring.local_dim();
        let (c0, c1) = designated_sites(ring);
        let tau = match &model {
            ModelSpec::LocalHamiltonian { time, .. } => *time,
            ModelSpec::BrickworkCircuit { .. } => 0.0,
        };
        PseudoBulkSpec {
            ring,
            model,
            resource: StateVector::zero(ring.dims()),
            encoder_a: LocalMap::swap_in(c0, d),
            encoder_b: LocalMap::swap_in(c1, d),
            decoder_a: LocalMap::swap_out(c0, d),
            decoder_b: LocalMap::swap_out(c1, d),
            dim_a: d,
            dim_b: d,
            tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = quarter_regions(self.ring);
        if self.resource.dims() != self.ring.dims().as_slice() {
            return Err(Error::DimensionMismatch("resource state must live on the ring".into()));
        }
        let d = self.ring.local_dim();
        self.encoder_a.check(self.ring, self.dim_a, d, &q.w, "W")?;
        self.encoder_b.check(self.ring, self.dim_b, d, &q.e, "E")?;
        self.decoder_a.check(self.ring, self.dim_a, self.dim_a, &q.n, "N")?;
        self.decoder_b.check(self.ring, self.dim_b, self.dim_b, &q.s, "S")?;
        Ok(())
    }
}

/// State vector over a changing list of factors, each tied to a guard register.
struct Workspace {
    dims: Vec<usize>,
    regs: Vec<usize>,
    amps: Vec<C64>,
}

impl Workspace {
    fn new(dims: Vec<usize>, regs: Vec<usize>, amps: Vec<C64>) -> Self {
        Workspace { dims, regs, amps }
    }

    fn position(&self, reg: usize) -> Result<usize> {
        self.regs
            .iter()
            .position(|&r| r == reg)
            .ok_or_else(|| Error::Invalid(format!("register {reg} is not live")))
    }

    fn add(&mut self, reg: usize, d: usize) {
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len() * d];
        for (i, a) in self.amps.iter().enumerate() {
            out[i * d] = *a;
        }
        self.amps = out;
        self.dims.push(d);
        self.regs.push(reg);
    }

    /// Drops a factor known to be in `|0⟩`.
    fn remove(&mut self, reg: usize) -> Result<()> {
        let pos = self.position(reg)?;
        let keep: Vec<usize> = (0..self.dims.len()).filter(|&k| k != pos).collect();
        let t = tensor::SplitTable::new(&self.dims, &keep);
        self.amps = (0..t.d_sub).map(|s| self.amps[t.at(0, s)]).collect();
        self.dims.remove(pos);
        self.regs.remove(pos);
        Ok(())
    }

    fn apply(&mut self, regs: &[usize], m: &CMat) -> Result<()> {
        let pos: Vec<usize> = regs.iter().map(|&r| self.position(r)).collect::<Result<_>>()?;
        qcore::apply_local(&mut self.amps, &self.dims, &pos, m);
        Ok(())
    }

    /// Applies a Kraus channel through its Stinespring isometry. `env` is a
    /// fresh register for the Kraus index (unused when there is one Kraus op).
    fn apply_channel(&mut self, inputs: &[usize], outputs: &[usize], ch: &Channel, env: Option<usize>) -> Result<()> {
        // Inputs that are not live yet (an output register read by its
        // first map) start in |0⟩.
        for (&r, &d) in inputs.iter().zip(ch.input_dims()) {
            if !self.regs.contains(&r) {
                self.add(r, d);
            }
        }
        let fresh: Vec<usize> = outputs.iter().copied().filter(|r| !inputs.contains(r)).collect();
        let gone: Vec<usize> = inputs.iter().copied().filter(|r| !outputs.contains(r)).collect();
        for (&r, &d) in outputs.iter().zip(ch.output_dims()) {
            if fresh.contains(&r) {
                self.add(r, d);
            }
        }
        let kraus = ch.kraus();
        let mut all: Vec<usize> = inputs.to_vec();
        all.extend(&fresh);
        if kraus.len() > 1 {
            let e = env.ok_or_else(|| Error::Invalid("channel needs an environment register".into()))?;
            self.add(e, kraus.len());
            all.push(e);
        }
        let pos: Vec<usize> = all.iter().map(|&r| self.position(r)).collect::<Result<_>>()?;
        let local_dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let dim = tensor::product(&local_dims);
        let idx = |r: usize| all.iter().position(|&x| x == r).unwrap();
        let in_idx: Vec<usize> = inputs.iter().map(|&r| idx(r)).collect();
        let out_idx: Vec<usize> = outputs.iter().map(|&r| idx(r)).collect();
        let env_idx = (kraus.len() > 1).then(|| all.len() - 1);
        let mut m = CMat::zeros(dim, dim);
        for col in 0..dim {
            let digits = tensor::digits(col, &local_dims);
            // Only columns with fresh outputs and environment in |0⟩ matter.
            if fresh.iter().any(|&r| digits[idx(r)] != 0) || env_idx.is_some_and(|e| digits[e] != 0) {
                continue;
            }
            let i: Vec<usize> = in_idx.iter().map(|&k| digits[k]).collect();
            let i_flat = tensor::from_digits(&i, ch.input_dims());
            for (k, op) in kraus.iter().enumerate() {
                for o_flat in 0..op.nrows() {
                    let v = op[(o_flat, i_flat)];
                    if v == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let o = tensor::digits(o_flat, ch.output_dims());
                    let mut row = digits.clone();
                    for &r in &gone {
                        row[idx(r)] = 0;
                    }
                    for (slot, &oi) in out_idx.iter().zip(&o) {
                        row[*slot] = oi;
                    }
                    if let Some(e) = env_idx {
                        row[e] = k;
                    }
                    m[(tensor::from_digits(&row, &local_dims), col)] += v;
                }
            }
        }
        qcore::apply_local(&mut self.amps, &self.dims, &pos, &m);
        for r in gone {
            self.remove(r)?;
        }
        Ok(())
    }

    /// Density matrix on `regs`, factors relabelled `0..k` in the given order.
    fn reduced(&self, regs: &[usize]) -> Result<DenseOperator> {
        let pos: Vec<usize> = regs.iter().map(|&r| self.position(r)).collect::<Result<_>>()?;
        let t = tensor::SplitTable::new(&self.dims, &pos);
        let m = CMat::from_fn(t.d_sub, t.d_rest, |s, r| self.amps[t.at(r, s)]);
        let rho = linalg::matmul(&m, &m.adjoint());
        DenseOperator::new((0..pos.len()).collect(), pos.iter().map(|&p| self.dims[p]).collect(), rho)
    }
}

/// Purification `Σ √λ |i⟩_R |v_i⟩_AB` of a density matrix on `A ⊗ B`.
fn purify(rho: &CMat) -> Result<(usize, Vec<C64>)> {
    let (vals, vecs) = linalg::hermitian_eigen(rho);
    if (rho - rho.adjoint()).norm() > 1e-9 {
        return Err(Error::Invalid("input state is not hermitian".into()));
    }
    if vals.first().is_some_and(|&l| l < -1e-9) {
        return Err(Error::NotPsd { min_eig: vals[0] });
    }
    let tr: f64 = vals.iter().sum();
    if (tr - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("input state has trace {tr}")));
    }
    let d = rho.nrows();
    let mut amps = vec![C64::new(0.0, 0.0); d * d];
    for (i, &l) in vals.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        for j in 0..d {
            amps[i * d + j] = vecs[(j, i)] * s;
        }
    }
    Ok((d, amps))
}

/// Register layout shared by both executions.
struct Layout {
    registers: Vec<Register>,
    reference: usize,
    a: usize,
    b: usize,
    out_a: usize,
    out_b: usize,
    env: [usize; 4],
    site0: usize,
    copy0: Option<usize>,
}

impl Layout {
    fn new(ring: Ring, copy: bool) -> Self {
        let n = ring.n_sites();
        let mut registers = vec![
            Register::reference("R"),
            Register::private("A", Party::Alice),
            Register::private("B", Party::Bob),
            Register::private("Ã", Party::Alice),
            Register::private("B̃", Party::Bob),
            Register::private("env.enc.A", Party::Alice),
            Register::private("env.enc.B", Party::Bob),
            Register::private("env.dec.A", Party::Alice),
            Register::private("env.dec.B", Party::Bob),
        ];
        let site0 = registers.len();
        registers.extend((0..n).map(|k| Register::lattice(format!("s{k}"), k)));
        let copy0 = copy.then(|| {
            let c = registers.len();
            registers.extend((0..n).map(|k| Register::lattice(format!("s'{k}"), k)));
            c
        });
        Layout {
            registers,
            reference: 0,
            a: 1,
            b: 2,
            out_a: 3,
            out_b: 4,
            env: [5, 6, 7, 8],
            site0,
            copy0,
        }
    }

    fn port(&self, p: Port, party: Party) -> usize {
        match (p, party) {
            (Port::Site(k), _) => self.site0 + k,
            (Port::Input, Party::Alice) => self.a,
            (Port::Input, Party::Bob) => self.b,
            (Port::Output, Party::Alice) => self.out_a,
            (Port::Output, Party::Bob) => self.out_b,
        }
    }

    /// Doubled-ring factor index to register.
    fn factor(&self, f: usize, n: usize) -> Result<usize> {
        if f < n {
            Ok(self.site0 + f)
        } else {
            self.copy0
                .map(|c| c + f - n)
                .ok_or_else(|| Error::Invalid(format!("factor {f} needs the system copy")))
        }
    }

    fn start(&self, spec: &PseudoBulkSpec, input: Input<'_>) -> Result<Workspace> {
        let d_ab = spec.dim_a * spec.dim_b;
        let (dr, pur) = match input {
            Input::Density(rho_ab) => {
                if rho_ab.nrows() != d_ab || rho_ab.ncols() != d_ab {
                    return Err(Error::DimensionMismatch(format!(
                        "input state is {}x{}, expected {d_ab}",
                        rho_ab.nrows(),
                        rho_ab.ncols()
                    )));
                }
                purify(rho_ab)?
            }
            Input::Choi => {
                let mut amps = vec![C64::new(0.0, 0.0); d_ab * d_ab];
                let w = C64::new(1.0 / (d_ab as f64).sqrt(), 0.0);
                for i in 0..d_ab {
                    amps[i * d_ab + i] = w;
                }
                (d_ab, amps)
            }
        };
        let mut dims = vec![dr, spec.dim_a, spec.dim_b];
        let n = spec.ring.n_sites();
        let mut regs = vec![self.reference, self.a, self.b];
        dims.extend(spec.ring.dims());
        regs.extend((0..n).map(|k| self.site0 + k));
        let res = spec.resource.amplitudes();
        let mut amps: Vec<C64> = pur.iter().flat_map(|p| res.iter().map(move |r| p * r)).collect();
        if let Some(c) = self.copy0 {
            dims.extend(spec.ring.dims());
            regs.extend((0..n).map(|k| c + k));
            let big = spec.ring.hilbert_dim();
            let mut out = vec![C64::new(0.0, 0.0); amps.len() * big];
            for (i, a) in amps.iter().enumerate() {
                out[i * big] = *a;
            }
            amps = out;
        }
        Ok(Workspace::new(dims, regs, amps))
    }
}

/// What the reference purifies: a given input state, or the maximally
/// entangled state that yields the Choi matrix.
#[derive(Clone, Copy)]
enum Input<'a> {
    Density(&'a CMat),
    Choi,
}

impl Input<'_> {
    fn outputs(&self, lay: &Layout) -> Vec<usize> {
        match self {
            Input::Density(_) => vec![lay.out_a, lay.out_b],
            Input::Choi => vec![lay.reference, lay.out_a, lay.out_b],
        }
    }
}

/// Applies a party-local map, recording it with the guard when one is given.
fn run_map(
    ws: &mut Workspace,
    lay: &Layout,
    map: &LocalMap,
    party: Party,
    env: usize,
    guard: Option<&mut LocalityGuard>,
) -> Result<()> {
    let inputs: Vec<usize> = map.inputs.iter().map(|&p| lay.port(p, party)).collect();
    let outputs: Vec<usize> = map.outputs.iter().map(|&p| lay.port(p, party)).collect();
    if let Some(g) = guard {
        let mut touched: Vec<usize> = inputs.iter().chain(&outputs).copied().collect();
        if map.channel.kraus().len() > 1 {
            touched.push(env);
        }
        touched.sort_unstable();
        touched.dedup();
        g.record(party, map.label.clone(), &touched)?;
    }
    ws.apply_channel(&inputs, &outputs, &map.channel, Some(env))
}

/// `𝒟_N ⊗ 𝒟_S [U (𝒩_A ⊗ 𝒩_B (ρ_AB ⊗ |ψ⟩⟨ψ|)) U†]`, evaluated globally.
/// Returns the density matrix on `Ã ⊗ B̃` (factors 0 and 1).
pub fn pseudo_bulk_dynamics(spec: &PseudoBulkSpec, rho_ab: &CMat) -> Result<DenseOperator> {
    pseudo_bulk(spec, Input::Density(rho_ab))
}

/// Normalized Choi matrix of the pseudo-bulk channel, reference factor first.
pub fn pseudo_bulk_choi(spec: &PseudoBulkSpec) -> Result<CMat> {
    Ok(pseudo_bulk(spec, Input::Choi)?.into_matrix())
}

fn pseudo_bulk(spec: &PseudoBulkSpec, input: Input<'_>) -> Result<DenseOperator> {
    spec.validate()?;
    let lay = Layout::new(spec.ring, false);
    let mut ws = lay.start(spec, input)?;
    run_map(&mut ws, &lay, &spec.encoder_a, Party::Alice, lay.env[0], None)?;
    run_map(&mut ws, &lay, &spec.encoder_b, Party::Bob, lay.env[1], None)?;
    let u = lattice::evolve_model(&spec.model, spec.ring)?;
    let ring_regs: Vec<usize> = (0..spec.ring.n_sites()).map(|k| lay.site0 + k).collect();
    ws.apply(&ring_regs, u.matrix())?;
    run_map(&mut ws, &lay, &spec.decoder_a, Party::Alice, lay.env[2], None)?;
    run_map(&mut ws, &lay, &spec.decoder_b, Party::Bob, lay.env[3], None)?;
    ws.reduced(&input.outputs(&lay))
}

/// Result of a two-party execution.
#[derive(Clone, Debug)]
pub struct NlqcRun {
    pub transcript: Transcript,
    /// Density matrix on `Ã ⊗ B̃` (or the Choi matrix, see [`nlqc_choi`]).
    pub output: DenseOperator,
}

/// Runs the protocol: encode, `U_W`/`U_E`, exchange, `U_N`/`U_S`, decode.
/// The system copy (if any) is discarded before decoding.
pub fn run_nlqc(spec: &PseudoBulkSpec, dec: &QuarterDecomposition, rho_ab: &CMat) -> Result<NlqcRun> {
    run_nlqc_with(spec, dec, rho_ab, None)
}

pub fn run_nlqc_with(
    spec: &PseudoBulkSpec,
    dec: &QuarterDecomposition,
    rho_ab: &CMat,
    fault: Option<Fault>,
) -> Result<NlqcRun> {
    execute(spec, dec, Input::Density(rho_ab), fault)
}

/// Two-party execution on half of a maximally entangled state; the output
/// is the normalized Choi matrix on `R ⊗ Ã ⊗ B̃`.
pub fn nlqc_choi(spec: &PseudoBulkSpec, dec: &QuarterDecomposition) -> Result<NlqcRun> {
    execute(spec, dec, Input::Choi, None)
}

fn execute(spec: &PseudoBulkSpec, dec: &QuarterDecomposition, input: Input<'_>, fault: Option<Fault>) -> Result<NlqcRun> {
    spec.validate()?;
    if dec.ring != spec.ring {
        return Err(Error::DimensionMismatch("decomposition ring differs from the spec ring".into()));
    }
    crate::decompose::check_piece_supports(dec)?;
    let piece = |h: Half| {
        dec.piece(h)
            .ok_or_else(|| Error::Invalid(format!("decomposition is missing piece {}", h.name())))
    };
    let (p_n, p_s, p_w, p_e) = (piece(Half::N)?, piece(Half::S)?, piece(Half::W)?, piece(Half::E)?);
    let n = spec.ring.n_sites();
    let d = spec.ring.local_dim();
    let (c0, c1) = designated_sites(spec.ring);
    let lay = Layout::new(spec.ring, dec.uses_aux_copy);
    let mut ws = lay.start(spec, input)?;
    let mut guard = LocalityGuard::new(spec.ring, lay.registers.clone());

    let apply_piece = |ws: &mut Workspace, g: &mut LocalityGuard, party: Party, p: &crate::decompose::Piece| -> Result<()> {
        let regs: Vec<usize> = p
            .operator
            .support()
            .iter()
            .map(|&f| lay.factor(f, n))
            .collect::<Result<_>>()?;
        g.record(party, p.half.name(), &regs)?;
        ws.apply(&regs, p.operator.matrix())
    };

    let mut enc_a = spec.encoder_a.clone();
    if fault == Some(Fault::CrossHalfEncoder) {
        // Alice's encoder reaches Bob's designated site.
        enc_a = LocalMap {
            label: format!("{}+cross@{c1}", enc_a.label),
            inputs: vec![Port::Input, Port::Site(c1)],
            outputs: vec![Port::Input, Port::Site(c1)],
            channel: Channel::unitary(vec![spec.dim_a, d], linalg::swap_qudits(d))?,
        };
    }
    run_map(&mut ws, &lay, &enc_a, Party::Alice, lay.env[0], Some(&mut guard))?;
    run_map(&mut ws, &lay, &spec.encoder_b, Party::Bob, lay.env[1], Some(&mut guard))?;
    if fault == Some(Fault::EarlyPost) {
        apply_piece(&mut ws, &mut guard, Party::Alice, p_n)?;
    }
    apply_piece(&mut ws, &mut guard, Party::Alice, p_w)?;
    apply_piece(&mut ws, &mut guard, Party::Bob, p_e)?;
    guard.exchange()?;
    apply_piece(&mut ws, &mut guard, Party::Alice, p_n)?;
    apply_piece(&mut ws, &mut guard, Party::Bob, p_s)?;
    run_map(&mut ws, &lay, &spec.decoder_a, Party::Alice, lay.env[2], Some(&mut guard))?;
    let mut dec_b = spec.decoder_b.clone();
    if fault == Some(Fault::OverlappingMessage) {
        // Bob reads a site he handed to Alice in the exchange.
        dec_b = LocalMap {
            label: format!("{}+overlap@{c0}", dec_b.label),
            inputs: vec![Port::Site(c0), Port::Output],
            outputs: vec![Port::Site(c0), Port::Output],
            channel: Channel::unitary(vec![d, spec.dim_b], linalg::swap_qudits(d))?,
        };
    }
    run_map(&mut ws, &lay, &dec_b, Party::Bob, lay.env[3], Some(&mut guard))?;
    let transcript = guard.finish(vec![lay.out_a, lay.out_b])?;
    audit(&transcript)?;
    Ok(NlqcRun {
        output: ws.reduced(&input.outputs(&lay))?,
        transcript,
    })
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(a: &DenseOperator, b: &DenseOperator) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch("trace distance operands".into()));
    }
    Ok(0.5 * linalg::hermitian_trace_norm(&(a.matrix() - b.matrix())))
}

/// `U(t) SWAP U(t)†` between a party register and one site, restricted to
/// one half.
#[derive(Clone, Debug)]
pub struct TruncatedSwap {
    pub map: LocalMap,
    /// `‖truncated − conjugated swap‖_∞` on `register ⊗ ring`.
    pub defect: f64,
    pub half: Half,
}

/// Conjugated swap-in encoder on `site`, truncated to the half (W or E)
/// containing it by twirling the other half and re-unitarizing.
pub fn time_rewind_encoder(model: &ModelSpec, ring: Ring, t_prime: f64, site: usize) -> Result<TruncatedSwap> {
    if site >= ring.n_sites() {
        return Err(Error::SupportOutOfRange {
            factor: site,
            n: ring.n_sites(),
        });
    }
    let radius = t_prime.abs() + ring.spacing();
    if radius >= std::f64::consts::PI / 2.0 {
        return Err(Error::Precondition(format!(
            "light-cone radius {radius:.4} plus one site reaches 2π/4"
        )));
    }
    let q = quarter_regions(ring);
    let half = if q.w.contains(site) { Half::W } else { Half::E };
    let mut enc = conjugated_swap(model, ring, t_prime, site, half, Port::Input)?;
    enc.map.label = format!("rewind@{site}");
    Ok(enc)
}

/// `U(t) SWAP_{port,site} U(t)†` with the ring factors outside `half` twirled
/// away and the remainder re-unitarized. `port` is `Input` or `Output`.
pub fn conjugated_swap(
    model: &ModelSpec,
    ring: Ring,
    t: f64,
    site: usize,
    half: Half,
    port: Port,
) -> Result<TruncatedSwap> {
    if matches!(port, Port::Site(_)) {
        return Err(Error::Invalid("the swap partner must be a party register".into()));
    }
    let q = quarter_regions(ring);
    if !half.region(&q).contains(site) {
        return Err(Error::Invalid(format!("site {site} is outside the {} half", half.name())));
    }
    let n = ring.n_sites();
    let d = ring.local_dim();
    let dim = ring.hilbert_dim() * d;
    if dim > lattice::DENSE_CAP * d {
        return Err(Error::CapExceeded { dim, cap: lattice::DENSE_CAP * d });
    }
    // Factor 0 is the party register, factor 1 + k is ring site k.
    let u = lattice::evolve_model(&model.at_time(t), ring)?;
    let mut dims = vec![d];
    dims.extend(ring.dims());
    let all: Vec<usize> = (0..=n).collect();
    let u_full = DenseOperator::new((1..=n).collect(), ring.dims(), u.into_matrix())?.extend_to(&all, &dims)?;
    let swap = DenseOperator::new(vec![0, 1 + site], vec![d, d], linalg::swap_qudits(d))?.extend_to(&all, &dims)?;
    let conj = u_full.compose(&swap)?.compose(&u_full.adjoint())?;
    let keep: Vec<usize> = half.region(&q).sites();
    let far: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).map(|k| 1 + k).collect();
    let reduced = partial_trace(&conj, &far)?;
    let d_far = d.pow(far.len() as u32) as f64;
    let local = qcore::polar_unitary(&reduced.scale(C64::new(1.0 / d_far, 0.0)))?;
    let truncated = local.extend_to(&all, &dims)?;
    let defect = linalg::op_norm(&(truncated.matrix() - conj.matrix()));
    let mut ports = vec![port];
    ports.extend(keep.iter().map(|&k| Port::Site(k)));
    Ok(TruncatedSwap {
        map: LocalMap {
            label: format!("conj-swap@{site}"),
            inputs: ports.clone(),
            outputs: ports,
            channel: Channel::unitary(vec![d; keep.len() + 1], local.into_matrix())?,
        },
        defect,
        half,
    })
}
