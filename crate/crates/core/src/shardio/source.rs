// SPDX-License-Identifier: MIT OR Apache-2.0

use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

use super::shard::{ShardDataset, ShardReader, ShardRow};

/// Rewindable stream of rows. Training wraps around on exhaustion and
/// evaluations make one or two passes.
pub trait RowSource<T: Scalar> {
    /// `(d_in, d_out)` of the rows this source yields.
    fn dims(&self) -> (usize, usize);

    fn next_row(&mut self) -> Result<Option<ShardRow<T>>>;

    fn rewind(&mut self) -> Result<()>;
}

impl<T: Scalar, S: RowSource<T> + ?Sized> RowSource<T> for &mut S {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn next_row(&mut self) -> Result<Option<ShardRow<T>>> {
        (**self).next_row()
    }
    fn rewind(&mut self) -> Result<()> {
        (**self).rewind()
    }
}

/// In-memory rows.
#[derive(Debug, Clone)]
pub struct MemoryRows<T> {
    rows: Vec<ShardRow<T>>,
    dims: (usize, usize),
    pos: usize,
}

impl<T: Scalar> MemoryRows<T> {
    pub fn new(rows: Vec<ShardRow<T>>) -> Self {
        let dims = rows
            .first()
            .map(|r| (r.input.len(), r.target.len()))
            .unwrap_or((0, 0));
        Self { rows, dims, pos: 0 }
    }

    pub fn rows(&self) -> &[ShardRow<T>] {
        &self.rows
    }
}

impl<T: Scalar> RowSource<T> for MemoryRows<T> {
    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn next_row(&mut self) -> Result<Option<ShardRow<T>>> {
        let row = self.rows.get(self.pos).cloned();
        if row.is_some() {
            self.pos += 1;
        }
        Ok(row)
    }

    fn rewind(&mut self) -> Result<()> {
        self.pos = 0;
        Ok(())
    }
}

/// Streaming cursor over a [`ShardDataset`].
pub struct DatasetCursor<T> {
    dataset: ShardDataset,
    file: usize,
    reader: Option<ShardReader>,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> DatasetCursor<T> {
    pub(crate) fn new(dataset: ShardDataset) -> Self {
        Self {
            dataset,
            file: 0,
            reader: None,
            _scalar: PhantomData,
        }
    }
}

impl<T: Scalar> RowSource<T> for DatasetCursor<T> {
    fn dims(&self) -> (usize, usize) {
        (self.dataset.d_in(), self.dataset.d_out())
    }

    fn next_row(&mut self) -> Result<Option<ShardRow<T>>> {
        loop {
            if self.reader.is_none() {
                let Some(path) = self.dataset.paths().nth(self.file) else {
                    return Ok(None);
                };
                self.reader = Some(ShardReader::open(path)?);
            }
            let reader = self.reader.as_mut().expect("opened above");
            let mut input = Vec::with_capacity(self.dataset.d_in());
            let mut target = Vec::with_capacity(self.dataset.d_out());
            if reader.read_into(&mut input, &mut target)? {
                return Ok(Some(ShardRow { input, target }));
            }
            self.reader = None;
            self.file += 1;
        }
    }

    fn rewind(&mut self) -> Result<()> {
        self.file = 0;
        self.reader = None;
        Ok(())
    }
}

/// Which part of a stored row feeds the coder.
///
/// Transcoders use the stored pairs. An autoencoder reconstructs a single
/// vector, either the stored target (the MLP output) or the stored input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowView {
    #[default]
    Pairs,
    TargetOnly,
    InputOnly,
}

impl RowView {
    pub fn apply<T: Scalar>(self, row: ShardRow<T>) -> ShardRow<T> {
        match self {
            RowView::Pairs => row,
            RowView::TargetOnly => ShardRow {
                input: row.target.clone(),
                target: row.target,
            },
            RowView::InputOnly => ShardRow {
                input: row.input.clone(),
                target: row.input,
            },
        }
    }

    pub fn dims(self, (d_in, d_out): (usize, usize)) -> (usize, usize) {
        match self {
            RowView::Pairs => (d_in, d_out),
            RowView::TargetOnly => (d_out, d_out),
            RowView::InputOnly => (d_in, d_in),
        }
    }
}

/// A source seen through a [`RowView`].
pub struct Viewed<S> {
    pub inner: S,
    pub view: RowView,
}

impl<T: Scalar, S: RowSource<T>> RowSource<T> for Viewed<S> {
    fn dims(&self) -> (usize, usize) {
        self.view.dims(self.inner.dims())
    }
    fn next_row(&mut self) -> Result<Option<ShardRow<T>>> {
        Ok(self.inner.next_row()?.map(|r| self.view.apply(r)))
    }
    fn rewind(&mut self) -> Result<()> {
        self.inner.rewind()
    }
}
