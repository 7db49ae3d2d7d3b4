//! Round execution and the builtin operators.
//!
//! A device round is `execute_round(&RoundContext, program)`: the program
//! receives a [`Ctx`] and calls builtins on it. Builtins that exchange or
//! persist state (`old`, `nbr`, `share`, `branch`, `spawn`) derive their
//! trace key from the caller's source location, so calling the same
//! aggregate function from two places never mixes their state. A call site
//! that runs more than once per round (a loop) must be wrapped in
//! [`Ctx::iteration`]; otherwise the round fails with a trace collision.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::panic::Location;
use std::rc::Rc;
use std::sync::Arc;

use super::error::RoundError;
use super::export::Export;
use super::field::NbrField;
use super::trace::{Cursor, Tag, TraceId, TraceKey};
use super::wire::Wire;
use super::DeviceId;
use crate::geometry::Vec2;

/// Default number of own rounds a neighbour export stays usable.
pub const DEFAULT_STALENESS: u32 = 3;
/// Default number of rounds a terminated process key stays quarantined.
pub const DEFAULT_QUARANTINE: u32 = 5;

/// Sensor readings available to the program in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSnapshot {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Measured distance to each neighbour in metres; self entry is zero.
    pub nbr_distances: NbrField<f64>,
}

impl SensorSnapshot {
    pub fn new(device: DeviceId) -> Self {
        SensorSnapshot {
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            nbr_distances: NbrField::new(device, 0.0, f64::INFINITY),
        }
    }

    pub fn with_distances(
        device: DeviceId,
        position: Vec2,
        velocity: Vec2,
        distances: impl IntoIterator<Item = (DeviceId, f64)>,
    ) -> Self {
        SensorSnapshot {
            position,
            velocity,
            nbr_distances: NbrField::from_entries(device, 0.0, f64::INFINITY, distances),
        }
    }
}

/// Everything a device knows at the start of a round.
#[derive(Debug, Clone)]
pub struct RoundContext {
    pub device: DeviceId,
    pub round: u32,
    pub prev_export: Option<Arc<Export>>,
    /// Latest non-stale export of each neighbour; never contains `device`.
    pub inbox: BTreeMap<DeviceId, Arc<Export>>,
    pub sensors: SensorSnapshot,
    pub quarantine: u32,
}

impl RoundContext {
    pub fn new(device: DeviceId, round: u32) -> Self {
        RoundContext {
            device,
            round,
            prev_export: None,
            inbox: BTreeMap::new(),
            sensors: SensorSnapshot::new(device),
            quarantine: DEFAULT_QUARANTINE,
        }
    }
}

/// Received neighbour exports with staleness-based eviction.
///
/// Staleness is measured in the receiver's own rounds: an export received
/// before round `r` is visible in rounds `r .. r + staleness`.
#[derive(Debug, Clone)]
pub struct Mailbox {
    staleness: u32,
    entries: BTreeMap<DeviceId, (Arc<Export>, u32)>,
}

impl Mailbox {
    pub fn new(staleness: u32) -> Self {
        Mailbox {
            staleness,
            entries: BTreeMap::new(),
        }
    }

    /// Stores `export`, received while the owner's next round is `next_round`.
    /// Older rounds from the same sender never replace newer ones.
    pub fn receive(&mut self, export: Arc<Export>, next_round: u32) {
        match self.entries.get(&export.device) {
            Some((held, _)) if held.round > export.round => {}
            _ => {
                self.entries.insert(export.device, (export, next_round));
            }
        }
    }

    /// Evicts stale exports and returns the usable ones for `round`.
    pub fn fresh(&mut self, round: u32) -> BTreeMap<DeviceId, Arc<Export>> {
        let staleness = self.staleness;
        self.entries
            .retain(|_, (_, received)| round.saturating_sub(*received) < staleness);
        self.entries
            .iter()
            .map(|(id, (e, _))| (*id, Arc::clone(e)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Runs one round of `program` on one device.
///
/// Pure: the same context always yields the same result and a
/// byte-identical export.
pub fn execute_round<T>(
    ctx: &RoundContext,
    program: impl FnOnce(&mut Ctx<'_>) -> T,
) -> Result<(T, Export), RoundError> {
    if ctx.inbox.contains_key(&ctx.device) {
        return Err(RoundError::SelfInInbox(ctx.device));
    }
    let mut eval = Ctx::new(ctx);
    let result = program(&mut eval);
    eval.finish().map(|export| (result, export))
}

/// Evaluation handle passed to aggregate programs.
pub struct Ctx<'a> {
    env: &'a RoundContext,
    cursor: Cursor,
    export: Export,
    claimed: HashMap<TraceId, TraceKey>,
    /// Every entry written this round, in order.
    written: Vec<TraceId>,
    domains: Vec<Rc<Vec<DeviceId>>>,
    error: Option<RoundError>,
}

impl<'a> Ctx<'a> {
    fn new(env: &'a RoundContext) -> Self {
        Ctx {
            env,
            cursor: Cursor::new(),
            export: Export::new(env.device, env.round),
            claimed: HashMap::new(),
            written: Vec::new(),
            domains: vec![Rc::new(env.inbox.keys().copied().collect())],
            error: None,
        }
    }

    fn finish(self) -> Result<Export, RoundError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.export),
        }
    }

    pub fn uid(&self) -> DeviceId {
        self.env.device
    }

    pub fn round(&self) -> u32 {
        self.env.round
    }

    pub fn sensors(&self) -> &SensorSnapshot {
        &self.env.sensors
    }

    pub fn position(&self) -> Vec2 {
        self.env.sensors.position
    }

    pub fn velocity(&self) -> Vec2 {
        self.env.sensors.velocity
    }

    pub fn quarantine(&self) -> u32 {
        self.env.quarantine
    }

    /// Whether an error has already been recorded this round.
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    // ---- internal plumbing shared with the process and block modules ----

    pub(crate) fn fail(&mut self, error: RoundError) {
        if self.error.is_none() {
            self.error = Some(error);
        }
    }

    /// Reserves the trace key `current path / tag`.
    pub(crate) fn claim(&mut self, tag: Tag) -> Option<TraceId> {
        let (id, key) = self.cursor.peek(tag);
        match self.claimed.entry(id) {
            Entry::Occupied(prev) => {
                let err = if *prev.get() == key {
                    RoundError::TraceCollision {
                        key: key.to_string(),
                    }
                } else {
                    RoundError::DigestCollision {
                        first: prev.get().to_string(),
                        second: key.to_string(),
                    }
                };
                self.fail(err);
                None
            }
            Entry::Vacant(slot) => {
                slot.insert(key);
                Some(id)
            }
        }
    }

    pub(crate) fn within<T>(&mut self, tag: Tag, f: impl FnOnce(&mut Self) -> T) -> T {
        let depth = self.cursor.depth();
        self.cursor.push(tag);
        let out = f(self);
        self.cursor.truncate(depth);
        out
    }

    pub(crate) fn within_domain<T>(
        &mut self,
        tags: &[Tag],
        domain: Vec<DeviceId>,
        f: impl FnOnce(&mut Self) -> T,
    ) -> T {
        let depth = self.cursor.depth();
        for tag in tags {
            self.cursor.push(*tag);
        }
        self.domains.push(Rc::new(domain));
        let out = f(self);
        self.domains.pop();
        self.cursor.truncate(depth);
        out
    }

    /// Neighbours aligned with the current evaluation point.
    pub(crate) fn domain(&self) -> Rc<Vec<DeviceId>> {
        Rc::clone(self.domains.last().expect("root domain"))
    }

    pub(crate) fn neighbour_export(&self, id: DeviceId) -> &Export {
        &self.env.inbox[&id]
    }

    pub(crate) fn put_shared(&mut self, id: TraceId, bytes: Vec<u8>) {
        self.written.push(id);
        self.export.shared.insert(id, bytes);
    }

    pub(crate) fn put_local(&mut self, id: TraceId, bytes: Vec<u8>) {
        self.written.push(id);
        self.export.local.insert(id, bytes);
    }

    pub(crate) fn write_mark(&self) -> usize {
        self.written.len()
    }

    /// Drops every entry written since `mark`.
    pub(crate) fn discard_writes(&mut self, mark: usize) {
        for id in self.written.drain(mark..) {
            self.export.shared.remove(&id);
            self.export.local.remove(&id);
        }
    }

    pub(crate) fn prev_local<T: Wire>(&mut self, id: TraceId) -> Option<T> {
        let decoded = self.env.prev_export.as_ref()?.get_local::<T>(id)?;
        self.decoded(decoded, id, self.env.device)
    }

    pub(crate) fn prev_shared<T: Wire>(&mut self, id: TraceId) -> Option<T> {
        let decoded = self.env.prev_export.as_ref()?.get_shared::<T>(id)?;
        self.decoded(decoded, id, self.env.device)
    }

    fn decoded<T>(
        &mut self,
        value: Result<T, super::wire::WireError>,
        id: TraceId,
        from: DeviceId,
    ) -> Option<T> {
        match value {
            Ok(v) => Some(v),
            Err(source) => {
                self.fail(RoundError::Decode {
                    trace: id,
                    from,
                    source,
                });
                None
            }
        }
    }

    /// Values aligned neighbours exported at `id` in their latest round.
    pub(crate) fn neighbour_values<T: Wire>(&mut self, id: TraceId) -> Vec<(DeviceId, T)> {
        let domain = self.domain();
        let mut out = Vec::with_capacity(domain.len());
        for &n in domain.iter() {
            let env = self.env;
            if let Some(decoded) = env.inbox[&n].get_shared::<T>(id) {
                if let Some(v) = self.decoded(decoded, id, n) {
                    out.push((n, v));
                }
            }
        }
        out
    }

    fn gather<T: Wire + Clone>(&mut self, id: TraceId, v0: T) -> NbrField<T> {
        let own = self.prev_shared::<T>(id).unwrap_or_else(|| v0.clone());
        let others = self.neighbour_values::<T>(id);
        NbrField::from_entries(self.uid(), own, v0, others)
    }

    // ---- builtins ----

    /// Value of `v` from the previous round, `v0` on the first.
    #[track_caller]
    pub fn old<T: Wire + Clone>(&mut self, v0: T, v: T) -> T {
        let tag = Tag::site(Location::caller());
        let Some(id) = self.claim(tag) else {
            return v0;
        };
        let prev = self.prev_local::<T>(id).unwrap_or(v0);
        self.put_local(id, v.to_wire());
        prev
    }

    /// Applies `f` to this expression's own previous value (`v0` when there
    /// is none), stores and returns the result.
    #[track_caller]
    pub fn old_by<T: Wire + Clone>(&mut self, v0: T, f: impl FnOnce(T) -> T) -> T {
        let tag = Tag::site(Location::caller());
        let Some(id) = self.claim(tag) else {
            return v0;
        };
        let prev = self.prev_local::<T>(id).unwrap_or(v0);
        let next = f(prev);
        self.put_local(id, next.to_wire());
        next
    }

    /// Neighbouring field of the values neighbours fed to this call site in
    /// their previous round; the self entry is this device's own previous
    /// value, or `v0`.
    #[track_caller]
    pub fn nbr<T: Wire + Clone>(&mut self, v0: T, v: T) -> NbrField<T> {
        let tag = Tag::site(Location::caller());
        let Some(id) = self.claim(tag) else {
            return NbrField::uniform(self.uid(), v0);
        };
        let field = self.gather(id, v0);
        self.put_shared(id, v.to_wire());
        field
    }

    /// The share form of `nbr`: `f` maps the neighbouring field of this
    /// expression's previous values to the new value, which is both
    /// returned and sent.
    #[track_caller]
    pub fn share<T, F>(&mut self, v0: T, f: F) -> T
    where
        T: Wire + Clone,
        F: FnOnce(&mut Ctx<'a>, NbrField<T>) -> T,
    {
        let tag = Tag::site(Location::caller());
        let Some(id) = self.claim(tag) else {
            return v0;
        };
        let field = self.gather(id, v0);
        let next = self.within(tag, |ctx| f(ctx, field));
        self.put_shared(id, next.to_wire());
        next
    }

    /// Conditional branching: only the selected branch runs, and devices in
    /// different branches do not align inside it.
    #[track_caller]
    pub fn branch<T>(
        &mut self,
        cond: bool,
        then: impl FnOnce(&mut Ctx<'a>) -> T,
        otherwise: impl FnOnce(&mut Ctx<'a>) -> T,
    ) -> T {
        let site = Tag::site(Location::caller());
        let branch = Tag::Branch(cond);
        let marker = self.within(site, |ctx| ctx.claim(branch));
        let domain = match marker {
            Some(id) => {
                self.put_shared(id, Vec::new());
                self.domain()
                    .iter()
                    .copied()
                    .filter(|n| self.neighbour_export(*n).shared.contains_key(&id))
                    .collect()
            }
            None => Vec::new(),
        };
        self.within_domain(&[site, branch], domain, |ctx| {
            if cond {
                then(ctx)
            } else {
                otherwise(ctx)
            }
        })
    }

    /// Scopes an aggregate function call at the caller's location.
    #[track_caller]
    pub fn call<T>(&mut self, f: impl FnOnce(&mut Ctx<'a>) -> T) -> T {
        self.within(Tag::site(Location::caller()), f)
    }

    /// Scopes a call under an explicit tag (for generated or interpreted
    /// programs where source locations are not distinctive).
    pub fn scope<T>(&mut self, tag: u32, f: impl FnOnce(&mut Ctx<'a>) -> T) -> T {
        self.within(Tag::Named(tag), f)
    }

    /// Scopes one loop iteration.
    pub fn iteration<T>(&mut self, index: u32, f: impl FnOnce(&mut Ctx<'a>) -> T) -> T {
        self.within(Tag::Iter(index), f)
    }

    /// Field mapping every aligned neighbour (and self) to its own id.
    pub fn nbr_uid(&self) -> NbrField<DeviceId> {
        let me = self.uid();
        NbrField::from_entries(
            me,
            me,
            DeviceId::NONE,
            self.domain().iter().map(|id| (*id, *id)),
        )
    }

    /// Measured distances to aligned neighbours.
    pub fn nbr_dist(&self) -> NbrField<f64> {
        let all = &self.env.sensors.nbr_distances;
        NbrField::from_entries(
            self.uid(),
            0.0,
            f64::INFINITY,
            self.domain()
                .iter()
                .filter(|id| all.contains(**id))
                .map(|id| (*id, *all.get(*id))),
        )
    }

    pub fn self_of<T: Clone>(&self, field: &NbrField<T>) -> T {
        field.self_value().clone()
    }

    pub fn mod_self<T: Clone>(&self, field: NbrField<T>, value: T) -> NbrField<T> {
        field.with_self(value)
    }

    pub fn map_hood<T: Clone, U: Clone>(
        &self,
        f: impl FnMut(&T) -> U,
        field: &NbrField<T>,
    ) -> NbrField<U> {
        field.map(f)
    }

    pub fn map_hood2<T: Clone, U: Clone, R: Clone>(
        &self,
        f: impl FnMut(&T, &U) -> R,
        a: &NbrField<T>,
        b: &NbrField<U>,
    ) -> NbrField<R> {
        a.zip_with(b, f)
    }

    /// Folds every entry of `field` with a commutative, associative `f`.
    pub fn fold_hood<T: Clone>(&self, f: impl FnMut(T, &T) -> T, field: &NbrField<T>) -> T {
        field.fold(f)
    }

    /// Folds `field` with `value` in place of the self entry.
    pub fn fold_hood_with<T: Clone>(
        &self,
        f: impl FnMut(T, &T) -> T,
        field: &NbrField<T>,
        value: T,
    ) -> T {
        field.clone().with_self(value).fold(f)
    }

    pub fn min_hood<T: Clone + Ord>(&self, field: &NbrField<T>) -> T {
        field.fold(|a, b| if *b < a { b.clone() } else { a })
    }

    pub fn min_hood_with<T: Clone + Ord>(&self, field: &NbrField<T>, value: T) -> T {
        self.fold_hood_with(|a, b| if *b < a { b.clone() } else { a }, field, value)
    }

    /// Selects between two already-evaluated values.
    pub fn mux<T>(&self, cond: bool, when_true: T, when_false: T) -> T {
        if cond {
            when_true
        } else {
            when_false
        }
    }

    /// Point-wise selection between fields.
    pub fn mux_field<T: Clone>(
        &self,
        cond: &NbrField<bool>,
        when_true: &NbrField<T>,
        when_false: &NbrField<T>,
    ) -> NbrField<T> {
        let picked = cond.zip_with(when_true, |c, t| (*c, t.clone()));
        picked.zip_with(when_false, |(c, t), f| if *c { t.clone() } else { f.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(device: u32, round: u32) -> RoundContext {
        RoundContext::new(DeviceId(device), round)
    }

    /// Builds the next-round context of `device` from exports of the last one.
    fn next(prev: &RoundContext, own: Export, inbox: &[Export]) -> RoundContext {
        let mut c = RoundContext::new(prev.device, prev.round + 1);
        c.prev_export = Some(Arc::new(own));
        c.inbox = inbox
            .iter()
            .map(|e| (e.device, Arc::new(e.to_message())))
            .collect();
        c
    }

    #[test]
    fn old_returns_previous_value() {
        // One call site, fed 7 then 9.
        let prog = |v: i32| move |c: &mut Ctx<'_>| c.old(0, v);
        let c1 = ctx(0, 1);
        let (r1, e1) = execute_round(&c1, prog(7)).unwrap();
        assert_eq!(r1, 0);
        let c2 = next(&c1, e1, &[]);
        let (r2, _) = execute_round(&c2, prog(9)).unwrap();
        assert_eq!(r2, 7);
    }

    #[test]
    fn old_by_counts_rounds() {
        // Each round applies +1 to the expression's own previous result.
        let mut c = ctx(0, 1);
        let mut seen = Vec::new();
        for _ in 0..3 {
            let (r, e) = execute_round(&c, |c| c.old_by(0u32, |x| x + 1)).unwrap();
            seen.push(r);
            c = next(&c, e, &[]);
        }
        assert_eq!(seen, vec![1, 2, 3]);
    }

    #[test]
    fn nbr_first_round_uses_default() {
        let prog = |c: &mut Ctx<'_>| c.nbr(4u8, 9);
        let c = ctx(3, 1);
        let (f, e) = execute_round(&c, prog).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(*f.self_value(), 4);
        assert_eq!(e.shared.len(), 1);
        let c2 = next(&c, e, &[]);
        let (f2, _) = execute_round(&c2, prog).unwrap();
        assert_eq!(*f2.self_value(), 9);
    }

    #[test]
    fn two_nodes_exchange_uids() {
        let prog = |c: &mut Ctx<'_>| {
            let me = c.uid();
            c.nbr(DeviceId(0), me)
        };
        let a1 = ctx(1, 1);
        let b1 = ctx(2, 1);
        let (_, ea) = execute_round(&a1, prog).unwrap();
        let (_, eb) = execute_round(&b1, prog).unwrap();
        let a2 = next(&a1, ea, std::slice::from_ref(&eb));
        let (fa, _) = execute_round(&a2, prog).unwrap();
        assert_eq!(*fa.get(DeviceId(2)), DeviceId(2));
        assert_eq!(*fa.self_value(), DeviceId(1));
    }

    #[test]
    fn identical_context_is_deterministic() {
        let c = ctx(5, 4);
        let prog = |c: &mut Ctx<'_>| {
            let a = c.nbr(1u32, 2);
            let b = c.old(3i64, -1);
            c.share(0u16, |_, f| f.len() as u16 + b as u16 + *a.self_value() as u16)
        };
        let (r1, e1) = execute_round(&c, prog).unwrap();
        let (r2, e2) = execute_round(&c, prog).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(e1.to_bytes(), e2.to_bytes());
    }

    #[test]
    fn repeated_call_site_is_a_trace_collision() {
        let c = ctx(0, 1);
        let err = execute_round(&c, |c| {
            for _ in 0..2 {
                c.nbr(0u8, 1);
            }
        })
        .unwrap_err();
        assert!(matches!(err, RoundError::TraceCollision { .. }));

        let ok = execute_round(&c, |c| {
            for i in 0..2 {
                c.iteration(i, |c| c.nbr(0u8, 1));
            }
        });
        assert!(ok.is_ok());
    }

    #[test]
    fn self_in_inbox_is_rejected() {
        let mut c = ctx(0, 1);
        c.inbox.insert(DeviceId(0), Arc::new(Export::new(DeviceId(0), 0)));
        assert_eq!(
            execute_round(&c, |_| ()).unwrap_err(),
            RoundError::SelfInInbox(DeviceId(0))
        );
    }

    #[test]
    fn hood_operators() {
        let c = ctx(0, 1);
        execute_round(&c, |c| {
            let phi = NbrField::from_entries(
                DeviceId(0),
                1,
                0,
                [(DeviceId(1), 2), (DeviceId(2), 3)],
            );
            assert_eq!(c.fold_hood(|a, b| a + b, &phi), 6);
            assert_eq!(c.fold_hood_with(|a, b| a + b, &phi, 0), 5);
            assert_eq!(
                c.fold_hood(|a: i32, b| a.min(*b), &NbrField::uniform(DeviceId(0), 42)),
                42
            );
            assert_eq!(c.self_of(&phi), 1);
            let modded = c.mod_self(phi.clone(), 0);
            assert_eq!(*modded.self_value(), 0);
            assert_eq!(*modded.get(DeviceId(2)), 3);
            let doubled = c.map_hood(|x| x * 2, &phi);
            assert_eq!(*doubled.get(DeviceId(1)), 4);
            assert_eq!(c.map_hood(|x| *x, &phi), phi);
            let plus = c.map_hood2(|x, y| x + y, &phi, &NbrField::uniform(DeviceId(0), 10));
            assert_eq!((*plus.self_value(), *plus.get(DeviceId(1))), (11, 12));
            assert_eq!(c.mux(true, 1, 2), 1);
            assert_eq!(c.mux(false, 1, 2), 2);
        })
        .unwrap();
    }

    #[test]
    fn mux_field_is_pointwise() {
        let c = ctx(0, 1);
        execute_round(&c, |c| {
            let cond = NbrField::from_entries(DeviceId(0), true, false, [(DeviceId(1), false)]);
            let t = NbrField::from_entries(DeviceId(0), 1, 1, [(DeviceId(1), 1)]);
            let f = NbrField::from_entries(DeviceId(0), 2, 2, [(DeviceId(1), 2)]);
            let m = c.mux_field(&cond, &t, &f);
            assert_eq!((*m.self_value(), *m.get(DeviceId(1))), (1, 2));
        })
        .unwrap();
    }

    #[test]
    fn nbr_uid_lists_aligned_neighbours() {
        let mut c = ctx(5, 2);
        for id in [7, 9] {
            c.inbox.insert(DeviceId(id), Arc::new(Export::new(DeviceId(id), 1)));
        }
        let (uids, _) = execute_round(&c, |c| c.nbr_uid()).unwrap();
        let pairs: Vec<_> = uids.iter().map(|(k, v)| (k.0, v.0)).collect();
        assert_eq!(pairs, vec![(5, 5), (7, 7), (9, 9)]);
    }

    #[test]
    fn mailbox_evicts_after_staleness() {
        let mut mb = Mailbox::new(3);
        mb.receive(Arc::new(Export::new(DeviceId(1), 10)), 4);
        assert_eq!(mb.fresh(4).len(), 1);
        assert_eq!(mb.fresh(6).len(), 1);
        assert_eq!(mb.fresh(7).len(), 0);
        assert!(mb.is_empty());
    }

    #[test]
    fn mailbox_keeps_newest_round() {
        let mut mb = Mailbox::new(3);
        mb.receive(Arc::new(Export::new(DeviceId(1), 10)), 4);
        mb.receive(Arc::new(Export::new(DeviceId(1), 9)), 5);
        assert_eq!(mb.fresh(5)[&DeviceId(1)].round, 10);
    }
}
