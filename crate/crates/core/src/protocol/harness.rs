//! Party/round bookkeeping: typed registers, the event timeline, live
//! locality enforcement and an independent post-hoc audit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{quarter_regions, Ring};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "Alice",
            Party::Bob => "Bob",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    BeforeExchange,
    AfterExchange,
}

/// A register is either a lattice register at a ring site, a party's private
/// register, or an untouchable reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub label: String,
    pub site: Option<usize>,
    pub owner: Option<Party>,
}

impl Register {
    pub fn lattice(label: impl Into<String>, site: usize) -> Self {
        Register {
            label: label.into(),
            site: Some(site),
            owner: None,
        }
    }

    pub fn private(label: impl Into<String>, owner: Party) -> Self {
        Register {
            label: label.into(),
            site: None,
            owner: Some(owner),
        }
    }

    pub fn reference(label: impl Into<String>) -> Self {
        Register {
            label: label.into(),
            site: None,
            owner: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Local {
        party: Party,
        op: String,
        registers: Vec<usize>,
    },
    Exchange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub n_sites: usize,
    pub registers: Vec<Register>,
    pub events: Vec<Event>,
    pub outputs: Vec<usize>,
}

impl Transcript {
    pub fn exchange_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Exchange)).count()
    }
}

/// Records events, rejecting any that breaks the party/region rules.
#[derive(Clone, Debug)]
pub struct LocalityGuard {
    ring: Ring,
    stage: Stage,
    transcript: Transcript,
}

impl LocalityGuard {
    pub fn new(ring: Ring, registers: Vec<Register>) -> Self {
        LocalityGuard {
            ring,
            stage: Stage::BeforeExchange,
            transcript: Transcript {
                n_sites: ring.n_sites(),
                registers,
                events: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn registers(&self) -> &[Register] {
        &self.transcript.registers
    }

    pub fn add_register(&mut self, r: Register) -> usize {
        self.transcript.registers.push(r);
        self.transcript.registers.len() - 1
    }

    /// Why `party` may not touch register `r` now, if it may not.
    pub fn forbidden(&self, party: Party, r: usize) -> Option<String> {
        let reg = &self.transcript.registers[r];
        if let Some(owner) = reg.owner {
            return (owner != party).then(|| format!("{} is private to {owner}", reg.label));
        }
        let Some(site) = reg.site else {
            return Some(format!("{} is a reference register", reg.label));
        };
        let q = quarter_regions(self.ring);
        let (half, name) = match (party, self.stage) {
            (Party::Alice, Stage::BeforeExchange) => (&q.w, "W"),
            (Party::Bob, Stage::BeforeExchange) => (&q.e, "E"),
            (Party::Alice, Stage::AfterExchange) => (&q.n, "N"),
            (Party::Bob, Stage::AfterExchange) => (&q.s, "S"),
        };
        (!half.contains(site)).then(|| {
            let when = match self.stage {
                Stage::BeforeExchange => "before",
                Stage::AfterExchange => "after",
            };
            format!("{} at site {site} is outside {party}'s {name} half {when} the exchange", reg.label)
        })
    }

    /// Records a local operation, or fails naming the offending register.
    pub fn record(&mut self, party: Party, op: impl Into<String>, registers: &[usize]) -> Result<()> {
        let op: String = op.into();
        let event = self.transcript.events.len();
        for &r in registers {
            if r >= self.transcript.registers.len() {
                return Err(Error::Invalid(format!("unknown register {r}")));
            }
            if let Some(witness) = self.forbidden(party, r) {
                return Err(Error::Locality {
                    event,
                    party: party.to_string(),
                    witness: format!("{op}: {witness}"),
                });
            }
        }
        self.transcript.events.push(Event::Local {
            party,
            op,
            registers: registers.to_vec(),
        });
        Ok(())
    }

    pub fn exchange(&mut self) -> Result<()> {
        if self.stage == Stage::AfterExchange {
            return Err(Error::Locality {
                event: self.transcript.events.len(),
                party: "both".into(),
                witness: "second exchange round".into(),
            });
        }
        self.stage = Stage::AfterExchange;
        self.transcript.events.push(Event::Exchange);
        Ok(())
    }

    pub fn finish(mut self, outputs: Vec<usize>) -> Result<Transcript> {
        if self.stage != Stage::AfterExchange {
            return Err(Error::Locality {
                event: self.transcript.events.len(),
                party: "both".into(),
                witness: "protocol ended without an exchange".into(),
            });
        }
        self.transcript.outputs = outputs;
        Ok(self.transcript)
    }
}

/// Re-walks a transcript with integer half arithmetic: exactly one exchange,
/// every event inside the acting party's allowed registers.
pub fn audit(t: &Transcript) -> Result<()> {
    let n = t.n_sites;
    let in_w = |k: usize| 2 * k >= n;
    let in_n = |k: usize| 4 * k < n || 4 * k >= 3 * n;
    if t.exchange_count() != 1 {
        return Err(Error::Locality {
            event: t.events.len(),
            party: "both".into(),
            witness: format!("{} exchange events", t.exchange_count()),
        });
    }
    let mut after = false;
    for (i, e) in t.events.iter().enumerate() {
        let (party, op, regs) = match e {
            Event::Exchange => {
                after = true;
                continue;
            }
            Event::Local { party, op, registers } => (party, op, registers),
        };
        for &r in regs {
            let reg = t
                .registers
                .get(r)
                .ok_or_else(|| Error::Invalid(format!("event {i} names unknown register {r}")))?;
            let ok = match (reg.owner, reg.site) {
                (Some(o), _) => o == *party,
                (None, None) => false,
                (None, Some(k)) => match (party, after) {
                    (Party::Alice, false) => in_w(k),
                    (Party::Bob, false) => !in_w(k),
                    (Party::Alice, true) => in_n(k),
                    (Party::Bob, true) => !in_n(k),
                },
            };
            if !ok {
                return Err(Error::Locality {
                    event: i,
                    party: party.to_string(),
                    witness: format!("audit: {op} touches {}", reg.label),
                });
            }
        }
    }
    for &o in &t.outputs {
        if t.registers.get(o).is_none_or(|r| r.owner.is_none()) {
            return Err(Error::Invalid(format!("output register {o} is not party-held")));
        }
    }
    Ok(())
}

/// Canned locality faults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Alice's post-exchange piece runs before the exchange.
    EarlyPost,
    /// Alice's encoder reaches into the E half.
    CrossHalfEncoder,
    /// Bob touches an N-half register he sent away.
    OverlappingMessage,
}

impl Fault {
    pub const ALL: [Fault; 3] = [Fault::EarlyPost, Fault::CrossHalfEncoder, Fault::OverlappingMessage];
}
