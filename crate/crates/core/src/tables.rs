//! Dense utility tables over small sets of variables.
//!
//! Values are stored row-major with the last dimension varying fastest.
//! Sums saturate at `u64::MAX`, which never occurs for realistic inputs but
//! keeps arithmetic total.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::model::{CostTable, VariableId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TableError {
    DomainConflict(VariableId),
    MissingVar(VariableId),
    ValueOutOfRange { var: VariableId, value: usize },
}

impl fmt::Display for TableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableError::DomainConflict(v) => write!(f, "conflicting domain sizes for {v}"),
            TableError::MissingVar(v) => write!(f, "variable {v} is not a dimension"),
            TableError::ValueOutOfRange { var, value } => {
                write!(f, "value {value} out of range for {var}")
            }
        }
    }
}

impl core::error::Error for TableError {}

/// A partial assignment, kept sorted by variable so equal contents compare equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instantiation {
    entries: Vec<(VariableId, usize)>,
}

impl Instantiation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VariableId, usize)>) -> Self {
        let mut ins = Self::new();
        for (v, x) in pairs {
            ins.push(v, x);
        }
        ins
    }

    /// Inserts or overwrites the value of `var`.
    pub fn push(&mut self, var: VariableId, value: usize) {
        match self.entries.binary_search_by_key(&var, |e| e.0) {
            Ok(pos) => self.entries[pos].1 = value,
            Err(pos) => self.entries.insert(pos, (var, value)),
        }
    }

    pub fn get(&self, var: VariableId) -> Option<usize> {
        self.entries
            .binary_search_by_key(&var, |e| e.0)
            .ok()
            .map(|pos| self.entries[pos].1)
    }

    pub fn contains(&self, var: VariableId) -> bool {
        self.get(var).is_some()
    }

    /// Restriction to `vars`; variables absent from `self` are skipped.
    pub fn project(&self, vars: &[VariableId]) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|(v, _)| vars.contains(v))
                .collect(),
        }
    }

    /// Copies every entry of `other` into `self`.
    pub fn extend(&mut self, other: &Instantiation) {
        for &(v, x) in &other.entries {
            self.push(v, x);
        }
    }

    pub fn entries(&self) -> &[(VariableId, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for Instantiation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, (v, x)) in self.entries.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}={x}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtilityTable {
    pub dims: Vec<(VariableId, usize)>,
    pub values: Vec<u64>,
}

/// Minimising values for an eliminated variable, indexed like the table it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgTable {
    pub var: VariableId,
    pub dims: Vec<(VariableId, usize)>,
    pub args: Vec<usize>,
}

/// A utility table whose cells also carry the assignment that realises them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedTable {
    pub table: UtilityTable,
    pub witnesses: Vec<Instantiation>,
}

impl AnnotatedTable {
    pub fn witness_entries(&self) -> usize {
        self.witnesses.iter().map(Instantiation::len).sum()
    }
}

/// Strides of `dims` in row-major order, last dimension fastest.
fn strides(dims: &[(VariableId, usize)]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1].1;
    }
    s
}

/// For each dimension of `outer`, the stride of the same variable in `inner` (0 if absent).
fn stride_map(outer: &[(VariableId, usize)], inner: &[(VariableId, usize)]) -> Vec<usize> {
    let inner_strides = strides(inner);
    outer
        .iter()
        .map(|(v, _)| {
            inner
                .iter()
                .position(|(w, _)| w == v)
                .map_or(0, |k| inner_strides[k])
        })
        .collect()
}

/// Visits every cell of `dims` in order, yielding the offsets into each projected table.
fn for_each_cell<const N: usize>(
    dims: &[(VariableId, usize)],
    maps: [&[usize]; N],
    mut visit: impl FnMut([usize; N]),
) {
    let total: usize = dims.iter().map(|d| d.1).product();
    let mut idx = vec![0usize; dims.len()];
    let mut offs = [0usize; N];
    for _ in 0..total {
        visit(offs);
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            for (o, m) in offs.iter_mut().zip(maps.iter()) {
                *o += m[k];
            }
            if idx[k] < dims[k].1 {
                break;
            }
            for (o, m) in offs.iter_mut().zip(maps.iter()) {
                *o -= m[k] * idx[k];
            }
            idx[k] = 0;
        }
    }
}

impl UtilityTable {
    pub fn zeros(dims: Vec<(VariableId, usize)>) -> Self {
        let cells = dims.iter().map(|d| d.1).product();
        Self {
            dims,
            values: vec![0; cells],
        }
    }

    pub fn scalar(value: u64) -> Self {
        Self {
            dims: Vec::new(),
            values: vec![value],
        }
    }

    pub fn from_cost_table(c: &CostTable) -> Self {
        Self {
            dims: vec![(c.i, c.rows), (c.j, c.cols)],
            values: c.costs.clone(),
        }
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = VariableId> + '_ {
        self.dims.iter().map(|d| d.0)
    }

    pub fn has_var(&self, var: VariableId) -> bool {
        self.dims.iter().any(|d| d.0 == var)
    }

    /// Flat index of a full instantiation of this table's dimensions.
    pub fn offset(&self, ins: &Instantiation) -> Result<usize, TableError> {
        let st = strides(&self.dims);
        let mut off = 0;
        for (k, &(v, d)) in self.dims.iter().enumerate() {
            let x = ins.get(v).ok_or(TableError::MissingVar(v))?;
            if x >= d {
                return Err(TableError::ValueOutOfRange { var: v, value: x });
            }
            off += x * st[k];
        }
        Ok(off)
    }

    pub fn value_at(&self, ins: &Instantiation) -> Result<u64, TableError> {
        Ok(self.values[self.offset(ins)?])
    }

    /// The instantiation of this table's dimensions at a flat index.
    pub fn cell(&self, mut offset: usize) -> Instantiation {
        let mut vals = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            vals[k] = offset % self.dims[k].1;
            offset /= self.dims[k].1;
        }
        Instantiation::from_pairs(self.dims.iter().map(|d| d.0).zip(vals))
    }

    /// Pointwise sum; result dimensions are `a`'s followed by `b`'s new ones.
    pub fn join(a: &Self, b: &Self) -> Result<Self, TableError> {
        let mut dims = a.dims.clone();
        for &(v, d) in &b.dims {
            match dims.iter().find(|x| x.0 == v) {
                Some(&(_, e)) if e != d => return Err(TableError::DomainConflict(v)),
                Some(_) => {}
                None => dims.push((v, d)),
            }
        }
        let (ma, mb) = (stride_map(&dims, &a.dims), stride_map(&dims, &b.dims));
        let mut values = Vec::with_capacity(dims.iter().map(|d| d.1).product());
        for_each_cell(&dims, [&ma, &mb], |[ia, ib]| {
            values.push(a.values[ia].saturating_add(b.values[ib]));
        });
        Ok(Self { dims, values })
    }

    /// Minimises out `var`; ties go to the smallest value.
    pub fn eliminate_min(&self, var: VariableId) -> Result<(Self, ArgTable), TableError> {
        let pos = self
            .dims
            .iter()
            .position(|d| d.0 == var)
            .ok_or(TableError::MissingVar(var))?;
        let d = self.dims[pos].1;
        let step = strides(&self.dims)[pos];
        let mut dims = self.dims.clone();
        dims.remove(pos);
        let map = stride_map(&dims, &self.dims);
        let mut values = Vec::with_capacity(self.cells() / d.max(1));
        let mut args = Vec::with_capacity(values.capacity());
        for_each_cell(&dims, [&map], |[base]| {
            let (mut best, mut arg) = (u64::MAX, 0);
            for x in 0..d {
                let v = self.values[base + x * step];
                if v < best || x == 0 {
                    best = v;
                    arg = x;
                }
            }
            values.push(best);
            args.push(arg);
        });
        Ok((
            Self {
                dims: dims.clone(),
                values,
            },
            ArgTable { var, dims, args },
        ))
    }

    /// Fixes every dimension that `ins` assigns; other entries of `ins` are ignored.
    pub fn condition(&self, ins: &Instantiation) -> Result<Self, TableError> {
        let st = strides(&self.dims);
        let mut base = 0;
        let mut dims = Vec::new();
        let mut kept = Vec::new();
        for (k, &(v, d)) in self.dims.iter().enumerate() {
            match ins.get(v) {
                Some(x) if x >= d => return Err(TableError::ValueOutOfRange { var: v, value: x }),
                Some(x) => base += x * st[k],
                None => {
                    dims.push((v, d));
                    kept.push(st[k]);
                }
            }
        }
        let mut values = Vec::with_capacity(dims.iter().map(|d| d.1).product());
        for_each_cell(&dims, [&kept], |[off]| values.push(self.values[base + off]));
        Ok(Self { dims, values })
    }

    /// The same function with dimensions sorted by variable id.
    pub fn normalized(&self) -> Self {
        let mut dims = self.dims.clone();
        dims.sort();
        let map = stride_map(&dims, &self.dims);
        let mut values = Vec::with_capacity(self.cells());
        for_each_cell(&dims, [&map], |[off]| values.push(self.values[off]));
        Self { dims, values }
    }
}

impl ArgTable {
    /// The stored minimiser for the context; extra entries in `ctx` are ignored.
    pub fn lookup_best(&self, ctx: &Instantiation) -> Result<usize, TableError> {
        let st = strides(&self.dims);
        let mut off = 0;
        for (k, &(v, d)) in self.dims.iter().enumerate() {
            let x = ctx.get(v).ok_or(TableError::MissingVar(v))?;
            if x >= d {
                return Err(TableError::ValueOutOfRange { var: v, value: x });
            }
            off += x * st[k];
        }
        Ok(self.args[off])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: usize) -> VariableId {
        VariableId(i)
    }

    fn t(dims: &[(usize, usize)], values: &[u64]) -> UtilityTable {
        UtilityTable {
            dims: dims.iter().map(|&(a, d)| (v(a), d)).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn join_disjoint_and_shared() {
        let a = t(&[(0, 2)], &[1, 2]);
        let b = t(&[(1, 2)], &[10, 20]);
        assert_eq!(
            UtilityTable::join(&a, &b).unwrap(),
            t(&[(0, 2), (1, 2)], &[11, 21, 12, 22])
        );
        let c = t(&[(1, 2), (0, 2)], &[0, 1, 2, 3]);
        // c(x1, x0): result dims (x0, x1)
        assert_eq!(
            UtilityTable::join(&a, &c).unwrap(),
            t(&[(0, 2), (1, 2)], &[1, 3, 3, 5])
        );
    }

    #[test]
    fn join_domain_conflict() {
        let a = t(&[(0, 2)], &[1, 2]);
        let b = t(&[(0, 3)], &[1, 2, 3]);
        assert_eq!(
            UtilityTable::join(&a, &b),
            Err(TableError::DomainConflict(v(0)))
        );
    }

    #[test]
    fn eliminate_with_ties() {
        // rows x0, cols x1
        let a = t(&[(0, 2), (1, 3)], &[5, 3, 3, 0, 7, 0]);
        let (r, arg) = a.eliminate_min(v(1)).unwrap();
        assert_eq!(r, t(&[(0, 2)], &[3, 0]));
        assert_eq!(arg.args, alloc::vec![1, 0]);
        let (r, arg) = a.eliminate_min(v(0)).unwrap();
        assert_eq!(r, t(&[(1, 3)], &[0, 3, 0]));
        assert_eq!(arg.args, alloc::vec![1, 0, 1]);
        assert_eq!(
            arg.lookup_best(&Instantiation::from_pairs([(v(1), 2), (v(7), 0)]))
                .unwrap(),
            1
        );
        assert_eq!(
            arg.lookup_best(&Instantiation::new()),
            Err(TableError::MissingVar(v(1)))
        );
        assert_eq!(
            a.eliminate_min(v(9)).unwrap_err(),
            TableError::MissingVar(v(9))
        );
    }

    #[test]
    fn condition_and_normalize() {
        let a = t(&[(2, 2), (0, 3)], &[0, 1, 2, 3, 4, 5]);
        let c = a
            .condition(&Instantiation::from_pairs([(v(2), 1), (v(5), 0)]))
            .unwrap();
        assert_eq!(c, t(&[(0, 3)], &[3, 4, 5]));
        assert!(a
            .condition(&Instantiation::from_pairs([(v(0), 3)]))
            .is_err());
        let n = a.normalized();
        assert_eq!(n, t(&[(0, 3), (2, 2)], &[0, 3, 1, 4, 2, 5]));
    }

    #[test]
    fn cells_and_offsets_round_trip() {
        let a = t(&[(3, 2), (1, 3), (4, 2)], &[0; 12]);
        for off in 0..12 {
            assert_eq!(a.offset(&a.cell(off)).unwrap(), off);
        }
    }

    #[test]
    fn instantiation_sorted_and_projected() {
        let ins = Instantiation::from_pairs([(v(3), 1), (v(1), 2), (v(3), 0)]);
        assert_eq!(ins.entries(), &[(v(1), 2), (v(3), 0)]);
        assert_eq!(ins.project(&[v(3), v(9)]).entries(), &[(v(3), 0)]);
        assert_eq!(alloc::format!("{ins}"), "{1=2,3=0}");
    }

    #[test]
    fn saturating_sum() {
        let a = t(&[], &[u64::MAX]);
        assert_eq!(
            UtilityTable::join(&a, &a).unwrap().values,
            alloc::vec![u64::MAX]
        );
    }
}
