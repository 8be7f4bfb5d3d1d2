//! Shared domain types and the order-preserving dictionary codec.
//!
//! Values are plain signed 64-bit integers. Columns on the analytical side
//! are stored as fixed-width integer codes that index into a sorted
//! [`Dictionary`]; because the dictionary is sorted, comparing two codes
//! gives the same answer as comparing the values they stand for.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// An unencoded application value.
pub type Value = i64;

/// A dictionary code. Codes are stored logically as plain integers; the
/// dictionary's `width_bits` only drives byte accounting.
pub type Code = u32;

/// Reserved code marking a deleted row in an encoded column. It never
/// indexes into a dictionary.
pub const TOMBSTONE: Code = Code::MAX;

pub type TableId = u16;
pub type ColumnId = u16;
pub type RowId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error("value {0} is not present in the dictionary")]
    ValueNotInDictionary(Value),
    #[error("code {code} out of range for dictionary of {len} values")]
    CodeOutOfRange { code: Code, len: usize },
    #[error("dictionary must contain at least one value")]
    EmptyDictionary,
    #[error("dictionary values are not strictly ascending at index {0}")]
    UnsortedDictionary(usize),
    #[error("row of arity {got} does not match schema width {expected}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Addresses one cell: `(table, row, column)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub table_id: TableId,
    pub row_id: RowId,
    pub column_id: ColumnId,
}

impl RecordKey {
    pub fn new(table_id: TableId, row_id: RowId, column_id: ColumnId) -> Self {
        RecordKey { table_id, row_id, column_id }
    }

    pub fn column(&self) -> ColumnRef {
        ColumnRef::new(self.table_id, self.column_id)
    }
}

/// Names one column of one table, e.g. `T0.C2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table_id: TableId,
    pub column_id: ColumnId,
}

impl ColumnRef {
    pub fn new(table_id: TableId, column_id: ColumnId) -> Self {
        ColumnRef { table_id, column_id }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}.C{}", self.table_id, self.column_id)
    }
}

/// Number of fixed-width bits needed to encode `n_distinct` values.
///
/// The width never drops below one bit, so a single-value dictionary still
/// has a usable storage width.
pub fn code_width(n_distinct: usize) -> Result<u32, StorageError> {
    if n_distinct == 0 {
        return Err(StorageError::EmptyDictionary);
    }
    // ceil(log2(n)) == bit length of (n - 1)
    let bits = usize::BITS - (n_distinct - 1).leading_zeros();
    Ok(bits.max(1))
}

/// Bytes occupied by `n` codes of `width_bits` each.
pub fn encoded_bytes(n: usize, width_bits: u32) -> u64 {
    (n as u64 * width_bits as u64).div_ceil(8)
}

/// Sorted distinct values with a fixed code width.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dictionary {
    values: Vec<Value>,
    width_bits: u32,
}

impl Dictionary {
    /// Builds a dictionary from values that are already strictly ascending.
    pub fn from_sorted(values: Vec<Value>) -> Result<Self, StorageError> {
        if let Some(i) = values.windows(2).position(|w| w[0] >= w[1]) {
            return Err(StorageError::UnsortedDictionary(i + 1));
        }
        Ok(Self::from_sorted_unchecked(values))
    }

    /// Sorts and deduplicates arbitrary values.
    pub fn from_values<I: IntoIterator<Item = Value>>(values: I) -> Self {
        let mut v: Vec<Value> = values.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self::from_sorted_unchecked(v)
    }

    pub(crate) fn from_sorted_unchecked(values: Vec<Value>) -> Self {
        let width_bits = code_width(values.len()).unwrap_or(1);
        Dictionary { values, width_bits }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width_bits(&self) -> u32 {
        self.width_bits
    }

    /// Bytes the dictionary occupies when stored unencoded.
    pub fn byte_size(&self) -> u64 {
        self.values.len() as u64 * std::mem::size_of::<Value>() as u64
    }

    /// Binary search for `value`'s code.
    pub fn encode(&self, value: Value) -> Result<Code, StorageError> {
        self.values
            .binary_search(&value)
            .map(|i| i as Code)
            .map_err(|_| StorageError::ValueNotInDictionary(value))
    }

    pub fn decode(&self, code: Code) -> Result<Value, StorageError> {
        self.values
            .get(code as usize)
            .copied()
            .ok_or(StorageError::CodeOutOfRange { code, len: self.values.len() })
    }

    /// First code whose value is `>= value` (may equal `len()`).
    pub fn lower_bound(&self, value: Value) -> Code {
        self.values.partition_point(|v| *v < value) as Code
    }

    /// First code whose value is `> value` (may equal `len()`).
    pub fn upper_bound(&self, value: Value) -> Code {
        self.values.partition_point(|v| *v <= value) as Code
    }
}

/// Free-function form of [`Dictionary::encode`].
pub fn encode(dict: &Dictionary, value: Value) -> Result<Code, StorageError> {
    dict.encode(value)
}

/// Free-function form of [`Dictionary::decode`].
pub fn decode(dict: &Dictionary, code: Code) -> Result<Value, StorageError> {
    dict.decode(code)
}

/// A dictionary-encoded column (or column partition).
///
/// Codes and dictionary are both behind `Arc`s so that publishing a new
/// version is a pointer swap and snapshots can share unchanged data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedColumn {
    pub codes: Arc<Vec<Code>>,
    pub dict: Arc<Dictionary>,
}

impl EncodedColumn {
    pub fn new(codes: Vec<Code>, dict: Arc<Dictionary>) -> Self {
        EncodedColumn { codes: Arc::new(codes), dict }
    }

    /// Encodes a sequence of values (`None` = deleted row).
    pub fn encode_values(values: &[Option<Value>]) -> Self {
        let dict = Dictionary::from_values(values.iter().flatten().copied());
        let codes = values
            .iter()
            .map(|v| match v {
                Some(v) => dict.encode(*v).expect("value taken from the column itself"),
                None => TOMBSTONE,
            })
            .collect();
        EncodedColumn::new(codes, Arc::new(dict))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, row: usize) -> Result<Option<Value>, StorageError> {
        match self.codes.get(row) {
            None => Err(StorageError::CodeOutOfRange { code: row as Code, len: self.codes.len() }),
            Some(&TOMBSTONE) => Ok(None),
            Some(&c) => self.dict.decode(c).map(Some),
        }
    }

    /// Decodes every row.
    pub fn decode_all(&self) -> Result<Vec<Option<Value>>, StorageError> {
        self.codes
            .iter()
            .map(|&c| if c == TOMBSTONE { Ok(None) } else { self.dict.decode(c).map(Some) })
            .collect()
    }

    /// Checks that every non-tombstone code indexes into the dictionary.
    pub fn validate(&self) -> Result<(), StorageError> {
        let len = self.dict.len();
        match self.codes.iter().find(|&&c| c != TOMBSTONE && c as usize >= len) {
            Some(&code) => Err(StorageError::CodeOutOfRange { code, len }),
            None => Ok(()),
        }
    }

    pub fn byte_size(&self) -> u64 {
        encoded_bytes(self.codes.len(), self.dict.width_bits())
    }

    /// Number of distinct dictionary entries actually referenced by a code.
    pub fn referenced_values(&self) -> usize {
        let mut seen = vec![false; self.dict.len()];
        let mut n = 0;
        for &c in self.codes.iter() {
            if c != TOMBSTONE && !seen[c as usize] {
                seen[c as usize] = true;
                n += 1;
            }
        }
        n
    }
}

/// Row-wise (N-ary) table used by the transactional side. Deleted rows keep
/// their row id and are stored as `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NsmTable {
    pub table_id: TableId,
    n_columns: usize,
    rows: Vec<Option<Vec<Value>>>,
}

impl NsmTable {
    pub fn new(table_id: TableId, n_columns: usize) -> Self {
        NsmTable { table_id, n_columns, rows: Vec::new() }
    }

    pub fn from_rows(table_id: TableId, n_columns: usize, rows: Vec<Vec<Value>>) -> Result<Self, StorageError> {
        let mut t = NsmTable::new(table_id, n_columns);
        for r in rows {
            t.push_row(r)?;
        }
        Ok(t)
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    /// Number of row slots, including deleted ones.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, row: Vec<Value>) -> Result<RowId, StorageError> {
        if row.len() != self.n_columns {
            return Err(StorageError::ArityMismatch { expected: self.n_columns, got: row.len() });
        }
        self.rows.push(Some(row));
        Ok(self.rows.len() as RowId - 1)
    }

    pub fn row(&self, row: RowId) -> Option<&[Value]> {
        self.rows.get(row as usize).and_then(|r| r.as_deref())
    }

    pub fn is_live(&self, row: RowId) -> bool {
        self.row(row).is_some()
    }

    pub fn get(&self, row: RowId, column: ColumnId) -> Option<Value> {
        self.row(row).and_then(|r| r.get(column as usize).copied())
    }

    pub(crate) fn set(&mut self, row: RowId, column: ColumnId, value: Value) -> Option<Value> {
        let cell = self.rows.get_mut(row as usize)?.as_mut()?.get_mut(column as usize)?;
        Some(std::mem::replace(cell, value))
    }

    pub(crate) fn delete(&mut self, row: RowId) -> Option<Vec<Value>> {
        self.rows.get_mut(row as usize)?.take()
    }

    pub(crate) fn restore(&mut self, row: RowId, values: Vec<Value>) {
        self.rows[row as usize] = Some(values);
    }

    pub(crate) fn truncate(&mut self, n_rows: usize) {
        self.rows.truncate(n_rows);
    }

    /// Column projection, `None` for deleted rows.
    pub fn column(&self, column: ColumnId) -> Vec<Option<Value>> {
        self.rows.iter().map(|r| r.as_ref().map(|r| r[column as usize])).collect()
    }

    pub fn row_bytes(&self) -> u64 {
        self.n_columns as u64 * std::mem::size_of::<Value>() as u64
    }

    pub fn byte_size(&self) -> u64 {
        self.rows.len() as u64 * self.row_bytes()
    }
}
