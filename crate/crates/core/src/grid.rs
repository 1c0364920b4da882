//! Tiling per-frame tensors into `n × m` grids and back, plus the seeded
//! frame permutations that decide which frames share a grid.
//!
//! Cells are filled row-major. Grid `ℓ`, cell `j` holds frame
//! `order[ℓ·N + j]`. Orders range over the padded index set `0..K'`, where
//! `K'` is the smallest multiple of `N` not below `K`; padded slots reuse
//! the last real frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub cell_height: usize,
    pub cell_width: usize,
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, cell_height: usize, cell_width: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Layout(format!("{rows}x{cols} grid has no cells")));
        }
        if cell_height == 0 || cell_width == 0 {
            return Err(Error::Layout(format!(
                "cell size {cell_height}x{cell_width} is empty"
            )));
        }
        Ok(Self {
            rows,
            cols,
            cell_height,
            cell_width,
        })
    }

    /// Frames per grid, `N = n·m`.
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn grid_shape(&self, channels: usize) -> Shape {
        Shape::new(
            self.rows * self.cell_height,
            self.cols * self.cell_width,
            channels,
        )
    }

    pub fn cell_shape(&self, channels: usize) -> Shape {
        Shape::new(self.cell_height, self.cell_width, channels)
    }

    /// Top-left pixel of cell `j` (row-major).
    fn origin(&self, j: usize) -> (usize, usize) {
        (
            (j / self.cols) * self.cell_height,
            (j % self.cols) * self.cell_width,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddingPlan {
    pub original: usize,
    pub padded: usize,
    /// Source frame for each padding slot `original..padded`.
    pub pad_source: Vec<usize>,
}

impl PaddingPlan {
    pub fn pad_count(&self) -> usize {
        self.padded - self.original
    }

    pub fn grid_count(&self, cells: usize) -> usize {
        self.padded / cells
    }
}

pub fn plan_padding(frames: usize, cells: usize) -> Result<PaddingPlan> {
    if frames == 0 {
        return Err(Error::EmptyVideo);
    }
    if cells == 0 {
        return Err(Error::Layout("grid has no cells".into()));
    }
    let padded = frames.div_ceil(cells) * cells;
    Ok(PaddingPlan {
        original: frames,
        padded,
        pad_source: vec![frames - 1; padded - frames],
    })
}

/// A bijection over padded frame indices, drawn for one sampling step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub timestep: usize,
    pub seed: u64,
    pub forward: Vec<usize>,
}

impl Permutation {
    pub fn identity(len: usize, timestep: usize, seed: u64) -> Self {
        Self {
            timestep,
            seed,
            forward: (0..len).collect(),
        }
    }

    pub fn from_forward(forward: Vec<usize>, timestep: usize, seed: u64) -> Result<Self> {
        check_bijection(&forward)?;
        Ok(Self {
            timestep,
            seed,
            forward,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `self ∘ other`: index `i` maps to `self[other[i]]`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(Error::InvalidOrder(format!(
                "cannot compose permutations of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Permutation {
            timestep: self.timestep,
            seed: self.seed,
            forward: other.forward.iter().map(|&i| self.forward[i]).collect(),
        })
    }
}

pub fn invert_permutation(p: &Permutation) -> Permutation {
    let mut inverse = vec![0; p.forward.len()];
    for (i, &v) in p.forward.iter().enumerate() {
        inverse[v] = i;
    }
    Permutation {
        timestep: p.timestep,
        seed: p.seed,
        forward: inverse,
    }
}

pub fn check_bijection(order: &[usize]) -> Result<()> {
    let mut seen = vec![false; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        if i >= order.len() {
            return Err(Error::InvalidOrder(format!(
                "index {i} at position {pos} is out of range for {} frames",
                order.len()
            )));
        }
        if core::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidOrder(format!(
                "index {i} appears more than once"
            )));
        }
    }
    Ok(())
}

/// Seeded source of permutations. Draws are sequential, so the same seed and
/// the same sequence of calls always reproduce the same permutations.
#[derive(Clone, Debug)]
pub struct PermutationRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl PermutationRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Uniform random bijection over `0..padded` by Fisher–Yates.
pub fn sample_permutation(rng: &mut PermutationRng, padded: usize, timestep: usize) -> Permutation {
    let mut forward: Vec<usize> = (0..padded).collect();
    for i in (1..padded).rev() {
        let j = rng.rng.random_range(0..=i as u64) as usize;
        forward.swap(i, j);
    }
    Permutation {
        timestep,
        seed: rng.seed,
        forward,
    }
}

/// Tiles of one or more grids, with the frame index behind every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridBatch<C = Tensor> {
    pub grids: Vec<C>,
    pub layout: GridLayout,
    /// `assignment[ℓ][j]` is the padded frame index in cell `j` of grid `ℓ`.
    pub assignment: Vec<Vec<usize>>,
    /// Real frame count; assignment entries at or above it are padding.
    pub frames: usize,
}

impl<C> GridBatch<C> {
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn padded_frames(&self) -> usize {
        self.grids.len() * self.layout.cells()
    }
}

/// Shape shared by every cell, checked against the layout.
fn common_cell_shape<C: AsRef<Tensor>>(cells: &[C], layout: &GridLayout) -> Result<Shape> {
    let first = cells.first().ok_or(Error::EmptyVideo)?.as_ref().shape();
    let expected = layout.cell_shape(first.channels);
    for (index, cell) in cells.iter().enumerate() {
        let shape = cell.as_ref().shape();
        if shape != expected {
            return Err(Error::InconsistentFrame {
                index,
                expected,
                actual: shape,
            });
        }
    }
    Ok(expected)
}

fn check_order(frames: usize, layout: &GridLayout, order: &[usize]) -> Result<()> {
    let n = layout.cells();
    let padded = order.len();
    if !padded.is_multiple_of(n) || padded < frames || padded - frames >= n {
        return Err(Error::InvalidOrder(format!(
            "order of length {padded} does not pad {frames} frames to a multiple of {n}"
        )));
    }
    check_bijection(order)
}

/// Copies the cells `indices` (one per grid cell, row-major) into a new grid.
/// Indices past the end of `cells` read the last cell.
pub fn assemble_grid<C: AsRef<Tensor>>(
    cells: &[C],
    layout: &GridLayout,
    indices: &[usize],
) -> Result<Tensor> {
    if indices.len() != layout.cells() {
        return Err(Error::InvalidOrder(format!(
            "{} indices for a grid of {} cells",
            indices.len(),
            layout.cells()
        )));
    }
    let last = cells.len().checked_sub(1).ok_or(Error::EmptyVideo)?;
    let channels = cells[0].as_ref().channels();
    let mut grid = Tensor::zeros(layout.grid_shape(channels));
    for (j, &index) in indices.iter().enumerate() {
        let cell = cells[index.min(last)].as_ref();
        cell.ensure_shape(layout.cell_shape(channels))?;
        write_cell(&mut grid, layout, j, cell);
    }
    Ok(grid)
}

/// Writes `cell` into slot `j` of `grid`.
pub fn write_cell(grid: &mut Tensor, layout: &GridLayout, j: usize, cell: &Tensor) {
    let (y0, x0) = layout.origin(j);
    let row_len = layout.cell_width * cell.channels();
    for y in 0..layout.cell_height {
        let start = grid.offset(y0 + y, x0, 0);
        grid.data_mut()[start..start + row_len].copy_from_slice(cell.row(y));
    }
}

/// Copies slot `j` of `grid` into `dest`, which must hold one cell.
pub fn read_cell_into(grid: &Tensor, layout: &GridLayout, j: usize, dest: &mut [f64]) {
    let (y0, x0) = layout.origin(j);
    let row_len = layout.cell_width * grid.channels();
    for y in 0..layout.cell_height {
        let start = grid.offset(y0 + y, x0, 0);
        dest[y * row_len..(y + 1) * row_len].copy_from_slice(&grid.data()[start..start + row_len]);
    }
}

pub fn read_cell(grid: &Tensor, layout: &GridLayout, j: usize) -> Tensor {
    let mut cell = Tensor::zeros(layout.cell_shape(grid.channels()));
    read_cell_into(grid, layout, j, cell.data_mut());
    cell
}

/// Tiles `cells` into `order.len() / N` grids following `order`.
pub fn video2grid<C>(cells: &[C], layout: &GridLayout, order: &[usize]) -> Result<GridBatch<C>>
where
    C: AsRef<Tensor> + From<Tensor>,
{
    common_cell_shape(cells, layout)?;
    check_order(cells.len(), layout, order)?;
    let n = layout.cells();
    let mut grids = Vec::with_capacity(order.len() / n);
    let mut assignment = Vec::with_capacity(order.len() / n);
    for indices in order.chunks(n) {
        grids.push(C::from(assemble_grid(cells, layout, indices)?));
        assignment.push(indices.to_vec());
    }
    Ok(GridBatch {
        grids,
        layout: *layout,
        assignment,
        frames: cells.len(),
    })
}

/// Cuts every grid back into per-frame cells ordered by frame index,
/// dropping padding.
pub fn grid2video<C>(batch: &GridBatch<C>) -> Result<Vec<C>>
where
    C: AsRef<Tensor> + From<Tensor>,
{
    let n = batch.layout.cells();
    if batch.assignment.len() != batch.grids.len() || batch.assignment.iter().any(|a| a.len() != n)
    {
        return Err(Error::InvalidOrder(
            "assignment does not match the grid count or layout".into(),
        ));
    }
    let order: Vec<usize> = batch.assignment.iter().flatten().copied().collect();
    check_order(batch.frames, &batch.layout, &order)?;

    let mut slots: Vec<Option<C>> = (0..batch.frames).map(|_| None).collect();
    for (grid, indices) in batch.grids.iter().zip(&batch.assignment) {
        let grid = grid.as_ref();
        grid.ensure_shape(batch.layout.grid_shape(grid.channels()))?;
        for (j, &index) in indices.iter().enumerate() {
            if index < batch.frames {
                slots[index] = Some(C::from(read_cell(grid, &batch.layout, j)));
            }
        }
    }
    // check_order guarantees every real index was visited.
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}
