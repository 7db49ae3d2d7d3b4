use std::collections::BTreeMap;

use super::DeviceId;

/// A neighbouring field: one value per aligned neighbour plus the device
/// itself, with a default for ids outside the domain.
///
/// The self entry is always present, so folds are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct NbrField<T> {
    self_id: DeviceId,
    values: BTreeMap<DeviceId, T>,
    default: T,
}

impl<T: Clone> NbrField<T> {
    pub fn new(self_id: DeviceId, self_value: T, default: T) -> Self {
        let mut values = BTreeMap::new();
        values.insert(self_id, self_value);
        NbrField {
            self_id,
            values,
            default,
        }
    }

    /// A local value seen as a field: every id maps to `value`.
    pub fn uniform(self_id: DeviceId, value: T) -> Self {
        Self::new(self_id, value.clone(), value)
    }

    pub fn from_entries(
        self_id: DeviceId,
        self_value: T,
        default: T,
        others: impl IntoIterator<Item = (DeviceId, T)>,
    ) -> Self {
        let mut field = Self::new(self_id, self_value, default);
        for (id, v) in others {
            if id != self_id {
                field.values.insert(id, v);
            }
        }
        field
    }

    pub fn self_id(&self) -> DeviceId {
        self.self_id
    }

    pub fn self_value(&self) -> &T {
        &self.values[&self.self_id]
    }

    pub fn default_value(&self) -> &T {
        &self.default
    }

    /// Value at `id`, or the default when `id` is not in the domain.
    pub fn get(&self, id: DeviceId) -> &T {
        self.values.get(&id).unwrap_or(&self.default)
    }

    pub fn contains(&self, id: DeviceId) -> bool {
        self.values.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.values.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DeviceId, &T)> + '_ {
        self.values.iter().map(|(id, v)| (*id, v))
    }

    /// Entries other than self.
    pub fn neighbours(&self) -> impl Iterator<Item = (DeviceId, &T)> + '_ {
        let me = self.self_id;
        self.iter().filter(move |(id, _)| *id != me)
    }

    pub fn with_self(mut self, value: T) -> Self {
        self.values.insert(self.self_id, value);
        self
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&T) -> U) -> NbrField<U> {
        NbrField {
            self_id: self.self_id,
            values: self.values.iter().map(|(id, v)| (*id, f(v))).collect(),
            default: f(&self.default),
        }
    }

    /// Point-wise combination over the union of both domains; ids missing
    /// from one side take that side's default.
    pub fn zip_with<U: Clone, R: Clone>(
        &self,
        other: &NbrField<U>,
        mut f: impl FnMut(&T, &U) -> R,
    ) -> NbrField<R> {
        debug_assert_eq!(self.self_id, other.self_id);
        let mut values = BTreeMap::new();
        for id in self.values.keys().chain(other.values.keys()) {
            values
                .entry(*id)
                .or_insert_with(|| f(self.get(*id), other.get(*id)));
        }
        NbrField {
            self_id: self.self_id,
            values,
            default: f(&self.default, &other.default),
        }
    }

    pub fn fold(&self, mut f: impl FnMut(T, &T) -> T) -> T {
        let mut iter = self.values.values();
        let first = iter.next().expect("self entry always present").clone();
        iter.fold(first, |acc, v| f(acc, v))
    }

    /// Entry minimising `(key(value), id)`; ids break ties.
    pub fn argmin_by_key<K: Ord>(&self, mut key: impl FnMut(&T) -> K) -> (DeviceId, &T) {
        self.iter()
            .min_by(|(ia, a), (ib, b)| key(a).cmp(&key(b)).then(ia.cmp(ib)))
            .expect("self entry always present")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(entries: &[(u32, i32)]) -> NbrField<i32> {
        NbrField::from_entries(
            DeviceId(0),
            entries[0].1,
            0,
            entries[1..].iter().map(|(id, v)| (DeviceId(*id), *v)),
        )
    }

    #[test]
    fn absent_ids_read_the_default() {
        let f = NbrField::from_entries(DeviceId(1), 5, -1, [(DeviceId(2), 7)]);
        assert_eq!(*f.get(DeviceId(2)), 7);
        assert_eq!(*f.get(DeviceId(9)), -1);
        assert_eq!(*f.self_value(), 5);
    }

    #[test]
    fn self_entry_cannot_be_displaced_by_others() {
        let f = NbrField::from_entries(DeviceId(1), 5, 0, [(DeviceId(1), 99)]);
        assert_eq!(*f.self_value(), 5);
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn zip_extends_with_defaults() {
        let a = field(&[(0, 1), (1, 2)]);
        let b = NbrField::uniform(DeviceId(0), 10);
        let sum = a.zip_with(&b, |x, y| x + y);
        assert_eq!(*sum.get(DeviceId(0)), 11);
        assert_eq!(*sum.get(DeviceId(1)), 12);
        assert_eq!(*sum.default_value(), 10);
    }

    #[test]
    fn argmin_breaks_ties_by_id() {
        let f = field(&[(0, 3), (5, 1), (2, 1)]);
        assert_eq!(f.argmin_by_key(|v| *v), (DeviceId(2), &1));
    }
}
