//! Aggregate processes: the `spawn` builtin.
//!
//! A process is a keyed sub-computation that spreads from device to device.
//! Each device taking part evaluates the process function once per round
//! under a trace path that carries the key digest, so different processes
//! never exchange values. Participation is advertised in a small envelope
//! entry listing `(key bytes, status byte)` pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::Location;

use crate::calculus::wire::Fnv32;
use crate::calculus::{Ctx, DeviceId, RoundError, Tag, Wire, WireError};

/// Base participation state of a device in one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcessState {
    /// Shutting the process down; the shutdown spreads to neighbours.
    Terminated,
    /// Not taking part.
    External,
    /// Taking part without spreading the process further.
    Border,
    /// Taking part and spreading the process to neighbours.
    Internal,
}

/// Status returned by a process function: a base state plus whether the
/// result should appear in the output of `spawn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Status {
    pub state: ProcessState,
    pub output: bool,
}

impl Status {
    pub const TERMINATED: Status = Status::new(ProcessState::Terminated, false);
    pub const EXTERNAL: Status = Status::new(ProcessState::External, false);
    pub const BORDER: Status = Status::new(ProcessState::Border, false);
    pub const INTERNAL: Status = Status::new(ProcessState::Internal, false);
    pub const TERMINATED_OUTPUT: Status = Status::new(ProcessState::Terminated, true);
    pub const EXTERNAL_OUTPUT: Status = Status::new(ProcessState::External, true);
    pub const BORDER_OUTPUT: Status = Status::new(ProcessState::Border, true);
    pub const INTERNAL_OUTPUT: Status = Status::new(ProcessState::Internal, true);

    pub const fn new(state: ProcessState, output: bool) -> Self {
        Status { state, output }
    }

    pub fn with_output(self, output: bool) -> Self {
        Status { output, ..self }
    }

    fn to_byte(self) -> u8 {
        let base = match self.state {
            ProcessState::Terminated => 0,
            ProcessState::External => 1,
            ProcessState::Border => 2,
            ProcessState::Internal => 3,
        };
        base | (u8::from(self.output) << 2)
    }

    fn from_byte(byte: u8) -> Result<Self, WireError> {
        let state = match byte & 0b11 {
            0 => ProcessState::Terminated,
            1 => ProcessState::External,
            2 => ProcessState::Border,
            _ => ProcessState::Internal,
        };
        if byte >> 3 != 0 {
            return Err(WireError::InvalidTag {
                what: "status",
                tag: byte,
            });
        }
        Ok(Status::new(state, byte & 0b100 != 0))
    }
}

impl From<bool> for Status {
    fn from(inside: bool) -> Self {
        if inside {
            Status::INTERNAL_OUTPUT
        } else {
            Status::BORDER_OUTPUT
        }
    }
}

impl Wire for Status {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.to_byte());
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        Status::from_byte(u8::decode(input)?)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.state {
            ProcessState::Terminated => "terminated",
            ProcessState::External => "external",
            ProcessState::Border => "border",
            ProcessState::Internal => "internal",
        };
        if self.output {
            write!(f, "{base}_output")
        } else {
            f.write_str(base)
        }
    }
}

/// Per-device bookkeeping for one process key, kept across rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessRecord {
    /// Wire encoding of the key.
    pub key: Vec<u8>,
    /// Status at the end of the last round.
    pub status: Status,
    /// Rounds since the key was tombstoned; 0 while alive.
    pub tombstone_age: u32,
}

impl ProcessRecord {
    pub fn alive(key: Vec<u8>, status: Status) -> Self {
        ProcessRecord {
            key,
            status,
            tombstone_age: 0,
        }
    }

    pub fn is_tombstone(&self) -> bool {
        self.tombstone_age > 0
    }
}

impl Wire for ProcessRecord {
    fn encode(&self, out: &mut Vec<u8>) {
        self.key.encode(out);
        self.status.encode(out);
        self.tombstone_age.encode(out);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, WireError> {
        Ok(ProcessRecord {
            key: Vec::decode(input)?,
            status: Status::decode(input)?,
            tombstone_age: u32::decode(input)?,
        })
    }
}

/// Advances a record by one round before the process function runs.
///
/// `observed` holds the statuses aligned neighbours advertised for the key.
/// Returns `None` once a tombstone has aged `quarantine` rounds. A live
/// record that sees a terminated neighbour turns terminated; a record that
/// was terminated last round becomes a tombstone.
pub fn process_lifecycle_step(
    record: &ProcessRecord,
    observed: &[Status],
    quarantine: u32,
) -> Option<ProcessRecord> {
    if record.is_tombstone() {
        if record.tombstone_age >= quarantine {
            return None;
        }
        return Some(ProcessRecord {
            tombstone_age: record.tombstone_age + 1,
            ..record.clone()
        });
    }
    if record.status.state == ProcessState::Terminated {
        return Some(ProcessRecord {
            key: record.key.clone(),
            status: Status::EXTERNAL,
            tombstone_age: 1,
        });
    }
    if observed
        .iter()
        .any(|s| s.state == ProcessState::Terminated)
    {
        return Some(ProcessRecord::alive(record.key.clone(), Status::TERMINATED));
    }
    Some(record.clone())
}

type Envelope = Vec<(Vec<u8>, Status)>;

/// What a neighbour advertised for one key.
#[derive(Default)]
struct Adverts {
    statuses: Vec<Status>,
    /// Neighbours that ran the process last round (internal or border).
    members: Vec<DeviceId>,
    invited: bool,
}

impl<'a> Ctx<'a> {
    /// Runs the process function `p` for every active key and returns the
    /// results of keys whose status carries the output flag.
    ///
    /// Active keys are `keys`, keys advertised as internal by aligned
    /// neighbours and keys this device took part in last round, minus
    /// quarantined ones. Extra process arguments are captured by `p`.
    #[track_caller]
    pub fn spawn<K, R, S>(
        &mut self,
        keys: impl IntoIterator<Item = K>,
        mut p: impl FnMut(&mut Ctx<'a>, &K) -> (R, S),
    ) -> BTreeMap<K, R>
    where
        K: Wire + Ord + Clone + fmt::Debug,
        S: Into<Status>,
    {
        let site = Tag::site(Location::caller());
        let mut out = BTreeMap::new();
        let Some(envelope_id) = self.claim(site) else {
            return out;
        };
        let Some(records_id) = self.within(site, |c| c.claim(Tag::Slot(0))) else {
            return out;
        };

        let mut adverts: BTreeMap<Vec<u8>, Adverts> = BTreeMap::new();
        for (from, envelope) in self.neighbour_values::<Envelope>(envelope_id) {
            for (key, status) in envelope {
                let entry = adverts.entry(key).or_default();
                entry.statuses.push(status);
                match status.state {
                    ProcessState::Internal => {
                        entry.invited = true;
                        entry.members.push(from);
                    }
                    ProcessState::Border => entry.members.push(from),
                    _ => {}
                }
            }
        }

        let quarantine = self.quarantine();
        let mut records: BTreeMap<Vec<u8>, ProcessRecord> = BTreeMap::new();
        for record in self.prev_local::<Vec<ProcessRecord>>(records_id).unwrap_or_default() {
            let observed = adverts
                .get(&record.key)
                .map(|a| a.statuses.as_slice())
                .unwrap_or(&[]);
            if let Some(next) = process_lifecycle_step(&record, observed, quarantine) {
                records.insert(next.key.clone(), next);
            }
        }

        let mut candidates: BTreeMap<Vec<u8>, Option<K>> = BTreeMap::new();
        for key in keys {
            candidates.insert(key.to_wire(), Some(key));
        }
        for (key, advert) in &adverts {
            if advert.invited {
                candidates.entry(key.clone()).or_insert(None);
            }
        }
        for (key, record) in &records {
            if !record.is_tombstone() {
                candidates.entry(key.clone()).or_insert(None);
            }
        }

        let mut digests: BTreeMap<u32, Vec<u8>> = BTreeMap::new();
        let mut envelope: Envelope = Vec::new();
        for (bytes, key) in candidates {
            let record = match records.get(&bytes) {
                Some(r) => r.clone(),
                None => {
                    let fresh = ProcessRecord::alive(bytes.clone(), Status::EXTERNAL);
                    let observed = adverts
                        .get(&bytes)
                        .map(|a| a.statuses.as_slice())
                        .unwrap_or(&[]);
                    process_lifecycle_step(&fresh, observed, quarantine)
                        .expect("live records are never collected")
                }
            };
            if record.is_tombstone() {
                continue;
            }
            if record.status.state == ProcessState::Terminated {
                // Shutdown reached this device: advertise it without running p.
                envelope.push((bytes.clone(), Status::TERMINATED));
                records.insert(bytes.clone(), record);
                continue;
            }
            let key = match key {
                Some(k) => k,
                None => match K::from_wire(&bytes) {
                    Ok(k) => k,
                    Err(source) => {
                        let from = adverts
                            .get(&bytes)
                            .and_then(|a| a.members.first().copied())
                            .unwrap_or(self.uid());
                        self.fail(RoundError::Decode {
                            trace: envelope_id,
                            from,
                            source,
                        });
                        continue;
                    }
                },
            };
            let digest = Fnv32::hash(&bytes);
            if let Some(other) = digests.insert(digest, bytes.clone()) {
                let first = K::from_wire(&other)
                    .map(|k| format!("{k:?}"))
                    .unwrap_or_else(|_| format!("{other:?}"));
                self.fail(RoundError::ProcessKeyCollision {
                    first,
                    second: format!("{key:?}"),
                });
                continue;
            }
            let domain = adverts
                .get(&bytes)
                .map(|a| a.members.clone())
                .unwrap_or_default();
            let mark = self.write_mark();
            let (result, status) =
                self.within_domain(&[site, Tag::Process(digest)], domain, |c| p(c, &key));
            let status: Status = status.into();
            if status.output {
                out.insert(key, result);
            }
            if status.state == ProcessState::External {
                // Nobody aligns with an external device, so its state for
                // the key is neither sent nor kept.
                self.discard_writes(mark);
                records.remove(&bytes);
            } else {
                envelope.push((bytes.clone(), status.with_output(false)));
                records.insert(bytes.clone(), ProcessRecord::alive(bytes, status));
            }
        }

        // Tombstones stay local; everything else was refreshed above.
        records.retain(|_, r| r.is_tombstone() || envelope.iter().any(|(k, _)| *k == r.key));
        self.put_shared(envelope_id, envelope.to_wire());
        if !records.is_empty() {
            let list: Vec<ProcessRecord> = records.into_values().collect();
            self.put_local(records_id, list.to_wire());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{execute_round, RoundContext};
    use crate::simulator::Lockstep;

    #[test]
    fn status_bytes_round_trip() {
        for state in [
            ProcessState::Terminated,
            ProcessState::External,
            ProcessState::Border,
            ProcessState::Internal,
        ] {
            for output in [false, true] {
                let s = Status::new(state, output);
                assert_eq!(Status::from_wire(&s.to_wire()).unwrap(), s);
            }
        }
        assert!(Status::from_wire(&[0x08]).is_err());
        assert_eq!(Status::from(true), Status::INTERNAL_OUTPUT);
        assert_eq!(Status::from(false), Status::BORDER_OUTPUT);
        assert_eq!(Status::BORDER_OUTPUT.to_string(), "border_output");
    }

    #[test]
    fn terminated_neighbour_terminates_internal_node() {
        let r = ProcessRecord::alive(vec![1], Status::INTERNAL);
        let next = process_lifecycle_step(&r, &[Status::INTERNAL, Status::TERMINATED], 5).unwrap();
        assert_eq!(next.status.state, ProcessState::Terminated);
        assert_eq!(next.tombstone_age, 0);
        let tomb = process_lifecycle_step(&next, &[], 5).unwrap();
        assert!(tomb.is_tombstone());
    }

    #[test]
    fn tombstone_ignores_adverts_then_expires() {
        let mut r = ProcessRecord {
            key: vec![1],
            status: Status::EXTERNAL,
            tombstone_age: 1,
        };
        for age in 2..=5 {
            r = process_lifecycle_step(&r, &[Status::INTERNAL], 5).unwrap();
            assert_eq!(r.tombstone_age, age);
            assert_eq!(r.status.state, ProcessState::External);
        }
        assert_eq!(process_lifecycle_step(&r, &[Status::INTERNAL], 5), None);
    }

    #[test]
    fn empty_spawn_is_a_no_op() {
        let ctx = RoundContext::new(DeviceId(1), 1);
        let (out, export) = execute_round(&ctx, |c| {
            c.spawn(Vec::<u32>::new(), |_, _| ((), Status::INTERNAL))
        })
        .unwrap();
        assert!(out.is_empty());
        assert_eq!(export.shared.len(), 1);
        assert!(export.local.is_empty());
    }

    #[test]
    fn spawned_process_spreads_to_neighbours() {
        let mut net = Lockstep::line(3);
        let prog = |c: &mut Ctx<'_>| {
            let keys = if c.uid() == DeviceId(0) { vec![7u32] } else { vec![] };
            c.spawn(keys, |_, _| (7, Status::INTERNAL_OUTPUT))
        };
        let r1 = net.step(prog).unwrap();
        assert_eq!(r1[&DeviceId(0)], BTreeMap::from([(7u32, 7)]));
        assert!(r1[&DeviceId(1)].is_empty());
        let r2 = net.step(prog).unwrap();
        assert_eq!(r2[&DeviceId(1)].len(), 1);
        assert!(r2[&DeviceId(2)].is_empty());
        let r3 = net.step(prog).unwrap();
        assert_eq!(r3[&DeviceId(2)].len(), 1);
    }

    #[test]
    fn border_nodes_do_not_spread() {
        let mut net = Lockstep::line(4);
        let prog = |c: &mut Ctx<'_>| {
            let me = c.uid();
            let keys = if me == DeviceId(0) { vec![1u8] } else { vec![] };
            c.spawn(keys, move |_, _| {
                let s = if me.0 >= 1 { Status::BORDER_OUTPUT } else { Status::INTERNAL_OUTPUT };
                (me.0, s)
            })
        };
        for _ in 0..6 {
            let out = net.step(prog).unwrap();
            assert!(out[&DeviceId(2)].is_empty());
            assert!(out[&DeviceId(3)].is_empty());
        }
    }

    #[test]
    fn external_devices_are_invisible_inside_the_process() {
        let mut net = Lockstep::line(3);
        let prog = |c: &mut Ctx<'_>| {
            let me = c.uid();
            c.spawn([5u32], move |c, _| {
                let seen = c.nbr(0u32, 1).neighbours().count();
                let s = if me == DeviceId(1) { Status::EXTERNAL_OUTPUT } else { Status::INTERNAL_OUTPUT };
                (seen, s)
            })
        };
        for _ in 0..4 {
            let out = net.step(prog).unwrap();
            assert_eq!(out[&DeviceId(0)][&5], 0);
            assert_eq!(out[&DeviceId(2)][&5], 0);
        }
    }

    #[test]
    fn termination_wave_extinguishes_a_line() {
        let n = 6u32;
        let quarantine = 5;
        let mut net = Lockstep::line(n as usize);
        let stop = 10u32;
        let mut last_run = 0;
        for round in 1..=40u32 {
            let ran = std::cell::RefCell::new(Vec::new());
            net.step(|c| {
                let me = c.uid();
                let keys = if me == DeviceId(0) && round <= stop { vec![3u16] } else { vec![] };
                c.spawn(keys, |_, _| {
                    ran.borrow_mut().push(me);
                    let s = if me == DeviceId(0) && round == stop {
                        Status::TERMINATED
                    } else {
                        Status::INTERNAL
                    };
                    ((), s)
                })
            })
            .unwrap();
            if !ran.borrow().is_empty() {
                last_run = round;
            }
        }
        assert!(last_run < stop + n + 1 + quarantine, "ran at {last_run}");
    }

    #[test]
    fn own_key_stays_quarantined_after_termination() {
        let mut net = Lockstep::line(1);
        let mut runs = Vec::new();
        for round in 1..=12u32 {
            let mut ran = false;
            net.step(|c| {
                c.spawn([1u8], |_, _| {
                    ran = true;
                    let s = if round == 2 { Status::TERMINATED } else { Status::INTERNAL };
                    ((), s)
                })
            })
            .unwrap();
            runs.push(ran);
        }
        // Terminates in round 2, tombstoned in rounds 3-7, free again afterwards.
        assert_eq!(
            runs,
            vec![true, true, false, false, false, false, false, true, true, true, true, true]
        );
    }
}
