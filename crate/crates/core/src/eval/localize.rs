use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::argmax;
use crate::numerics::{Mat, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Model-wide concept id (spatial column plus `K_global`).
    pub concept: usize,
    pub score: f64,
}

/// Winning spatial concept of every patch, laid out row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<GridCell>,
}

impl LocalizationGrid {
    pub fn cell(&self, r: usize, c: usize) -> GridCell {
        self.cells[r * self.cols + c]
    }
}

fn grid_dims(patches: usize) -> (usize, usize) {
    let side = (patches as f64).sqrt().round() as usize;
    if side * side == patches {
        (side, side)
    } else {
        (1, patches)
    }
}

pub fn localization_grid<T: Real>(phi_spatial: &Mat<T>, k_global: usize) -> Result<LocalizationGrid> {
    if phi_spatial.cols() == 0 {
        return Err(Error::Evaluation("no spatial concepts to localize".into()));
    }
    let (rows, cols) = grid_dims(phi_spatial.rows());
    let cells = (0..phi_spatial.rows())
        .map(|l| {
            let row = phi_spatial.row(l);
            let k = argmax(row);
            GridCell {
                concept: k + k_global,
                score: row[k].as_f64(),
            }
        })
        .collect();
    Ok(LocalizationGrid { rows, cols, cells })
}
