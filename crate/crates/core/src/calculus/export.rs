//! Exports: the per-round value tree a device produces.
//!
//! An export has a shared part, broadcast to neighbours, and a local part
//! (state written by `old` and builtin bookkeeping) that only the device
//! itself reads back next round. Only the shared part goes on the air.
//!
//! Message layout, all integers little-endian:
//!
//! ```text
//! device:u32 round:u32 count:varint { trace:u32 len:varint bytes[len] }*
//! ```
//!
//! The full (storage) encoding appends the local entries in the same
//! `count { entry }*` form.

use std::collections::BTreeMap;

use super::trace::TraceId;
use super::wire::{get_varint, put_varint, take, varint_len, Wire, WireError};
use super::DeviceId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub device: DeviceId,
    pub round: u32,
    pub shared: BTreeMap<TraceId, Vec<u8>>,
    pub local: BTreeMap<TraceId, Vec<u8>>,
}

impl Export {
    pub fn new(device: DeviceId, round: u32) -> Self {
        Export {
            device,
            round,
            shared: BTreeMap::new(),
            local: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.shared.is_empty() && self.local.is_empty()
    }

    pub fn len(&self) -> usize {
        self.shared.len() + self.local.len()
    }

    pub fn get_shared<T: Wire>(&self, id: TraceId) -> Option<Result<T, WireError>> {
        self.shared.get(&id).map(|bytes| T::from_wire(bytes))
    }

    pub fn get_local<T: Wire>(&self, id: TraceId) -> Option<Result<T, WireError>> {
        self.local.get(&id).map(|bytes| T::from_wire(bytes))
    }

    /// The part a neighbour receives.
    pub fn to_message(&self) -> Export {
        Export {
            device: self.device,
            round: self.round,
            shared: self.shared.clone(),
            local: BTreeMap::new(),
        }
    }

    pub fn message_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.message_len());
        self.write_header(&mut out);
        write_entries(&mut out, &self.shared);
        out
    }

    /// Length of [`Export::message_bytes`] without allocating.
    pub fn message_len(&self) -> usize {
        8 + entries_len(&self.shared)
    }

    pub fn from_message_bytes(mut bytes: &[u8]) -> Result<Export, WireError> {
        let input = &mut bytes;
        let mut export = Self::read_header(input)?;
        export.shared = read_entries(input)?;
        if !input.is_empty() {
            return Err(WireError::Trailing(input.len()));
        }
        Ok(export)
    }

    /// Full encoding, local part included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.message_bytes();
        write_entries(&mut out, &self.local);
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Export, WireError> {
        let input = &mut bytes;
        let mut export = Self::read_header(input)?;
        export.shared = read_entries(input)?;
        export.local = read_entries(input)?;
        if !input.is_empty() {
            return Err(WireError::Trailing(input.len()));
        }
        Ok(export)
    }

    fn write_header(&self, out: &mut Vec<u8>) {
        self.device.0.encode(out);
        self.round.encode(out);
    }

    fn read_header(input: &mut &[u8]) -> Result<Export, WireError> {
        let device = DeviceId(u32::decode(input)?);
        let round = u32::decode(input)?;
        Ok(Export::new(device, round))
    }
}

fn write_entries(out: &mut Vec<u8>, entries: &BTreeMap<TraceId, Vec<u8>>) {
    put_varint(out, entries.len() as u64);
    for (id, bytes) in entries {
        id.0.encode(out);
        put_varint(out, bytes.len() as u64);
        out.extend_from_slice(bytes);
    }
}

fn entries_len(entries: &BTreeMap<TraceId, Vec<u8>>) -> usize {
    varint_len(entries.len() as u64)
        + entries
            .values()
            .map(|b| 4 + varint_len(b.len() as u64) + b.len())
            .sum::<usize>()
}

fn read_entries(input: &mut &[u8]) -> Result<BTreeMap<TraceId, Vec<u8>>, WireError> {
    let count = get_varint(input)?;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let id = TraceId(u32::decode(input)?);
        let len = get_varint(input)? as usize;
        entries.insert(id, take(input, len)?.to_vec());
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_message_is_header_only() {
        let e = Export::new(DeviceId(7), 3);
        // device + round + zero entry count
        assert_eq!(e.message_len(), 9);
        assert_eq!(e.message_bytes(), vec![7, 0, 0, 0, 3, 0, 0, 0, 0]);
    }

    #[test]
    fn size_grows_with_each_entry() {
        let mut e = Export::new(DeviceId(1), 1);
        let mut last = e.message_len();
        for i in 0..50u32 {
            e.shared.insert(TraceId(i), vec![]);
            let now = e.message_len();
            assert!(now > last);
            assert_eq!(now, e.message_bytes().len());
            last = now;
        }
    }

    #[test]
    fn local_entries_stay_off_the_air() {
        let mut e = Export::new(DeviceId(1), 1);
        e.local.insert(TraceId(5), vec![1, 2, 3]);
        assert_eq!(e.message_len(), 9);
        assert!(e.to_message().local.is_empty());
    }

    fn arb_export() -> impl Strategy<Value = Export> {
        let entries = || {
            proptest::collection::btree_map(
                any::<u32>().prop_map(TraceId),
                proptest::collection::vec(any::<u8>(), 0..300),
                0..12,
            )
        };
        (any::<u32>(), any::<u32>(), entries(), entries()).prop_map(|(d, r, shared, local)| Export {
            device: DeviceId(d),
            round: r,
            shared,
            local,
        })
    }

    proptest! {
        #[test]
        fn full_encoding_round_trips(e in arb_export()) {
            prop_assert_eq!(Export::from_bytes(&e.to_bytes()).unwrap(), e.clone());
            prop_assert_eq!(Export::from_message_bytes(&e.message_bytes()).unwrap(), e.to_message());
        }
    }
}
