//! Dense (action, context) matrix used for reward tables and policy propensities.
//!
//! Storage is context-major so that the per-context column, which every
//! policy constructor and MSE term works on, is a contiguous slice. The JSON
//! form is row-major by action: `[[v(a0,x0), v(a0,x1), ...], [v(a1,x0), ...]]`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionContextMatrix {
    n_actions: usize,
    n_contexts: usize,
    data: Vec<f64>,
}

impl ActionContextMatrix {
    pub fn filled(n_actions: usize, n_contexts: usize, value: f64) -> Self {
        Self {
            n_actions,
            n_contexts,
            data: vec![value; n_actions * n_contexts],
        }
    }

    /// Builds a matrix from one vector per context, each of length `n_actions`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_contexts = columns.len();
        let n_actions = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_actions) {
            return Err(Error::shape("context columns have different lengths"));
        }
        let data = columns.into_iter().flatten().collect();
        Ok(Self {
            n_actions,
            n_contexts,
            data,
        })
    }

    /// Builds a matrix from one vector per action, each of length `n_contexts`.
    pub fn from_action_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.len();
        let n_contexts = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_contexts) {
            return Err(Error::shape("action rows have different lengths"));
        }
        let mut m = Self::filled(n_actions, n_contexts, 0.0);
        for (a, row) in rows.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                m.set(a, x, v);
            }
        }
        Ok(m)
    }

    pub fn action_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_actions)
            .map(|a| (0..self.n_contexts).map(|x| self.get(a, x)).collect())
            .collect()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    #[inline]
    pub fn get(&self, action: usize, context: usize) -> f64 {
        self.data[context * self.n_actions + action]
    }

    #[inline]
    pub fn set(&mut self, action: usize, context: usize, value: f64) {
        self.data[context * self.n_actions + action] = value;
    }

    #[inline]
    pub fn column(&self, context: usize) -> &[f64] {
        let start = context * self.n_actions;
        &self.data[start..start + self.n_actions]
    }

    #[inline]
    pub fn column_mut(&mut self, context: usize) -> &mut [f64] {
        let start = context * self.n_actions;
        &mut self.data[start..start + self.n_actions]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.n_actions.max(1))
    }

    pub fn columns_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.data.chunks_exact_mut(self.n_actions.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_actions == other.n_actions && self.n_contexts == other.n_contexts
    }
}

impl Serialize for ActionContextMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.action_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionContextMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Self::from_action_rows(&rows).map_err(D::Error::custom)
    }
}
