//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use p3s::datasets;
use p3s::prims::assemble_fit_transform;
use p3s::search::heuristic_triple;
use p3s::{PipelineTriple, Table};

/// The bundled tic-tac-toe table with its rule-based pipelines.
pub fn tic_tac_toe() -> (Table, Vec<PipelineTriple>) {
    let table = datasets::tic_tac_toe();
    let specs = heuristic_specs(&table);
    (table, specs)
}

pub fn heuristic_specs(table: &Table) -> Vec<PipelineTriple> {
    table
        .columns
        .iter()
        .map(|c| heuristic_triple(c, p3s::prims::DEFAULT_ONEHOT_CAP))
        .collect()
}

/// Dense design matrix over all rows plus target codes.
pub fn design(table: &Table, specs: &[PipelineTriple]) -> (Array2<f64>, Vec<usize>) {
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    let (fit, _) = assemble_fit_transform(table, specs, &rows, &[], p3s::prims::DEFAULT_ONEHOT_CAP)
        .expect("heuristic pipelines assemble");
    (fit.matrix, table.target.codes.clone())
}
