use std::io::Write;

use super::MetricsReport;

/// One configuration of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub experiment: usize,
    pub heads: usize,
    pub edge_features: bool,
    pub rel: bool,
    pub virtual_nodes: bool,
    pub virtual_edges: bool,
}

const fn row(experiment: usize, heads: usize, ef: bool, rel: bool, vn: bool, ve: bool) -> AblationRow {
    AblationRow {
        experiment,
        heads,
        edge_features: ef,
        rel,
        virtual_nodes: vn,
        virtual_edges: ve,
    }
}

pub const ABLATION_GRID: [AblationRow; 13] = [
    row(1, 1, false, false, false, false),
    row(2, 2, false, false, false, false),
    row(3, 2, true, false, false, false),
    row(4, 2, true, true, false, false),
    row(5, 2, true, false, true, false),
    row(6, 2, true, false, false, true),
    row(7, 2, true, true, true, false),
    row(8, 2, true, true, false, true),
    row(9, 2, false, true, false, false),
    row(10, 2, false, false, true, false),
    row(11, 2, false, false, false, true),
    row(12, 2, false, true, true, false),
    row(13, 2, false, true, false, true),
];

pub const METRICS_HEADER: &str = "experiment,heads,edge_feat,rel,vn,ve,mee,mae,mse,rigid_mee,soft_mee,ree,infer_ms";

/// One CSV line under [`METRICS_HEADER`]; `label` fills the experiment column.
pub fn write_metrics_row<W: Write>(w: &mut W, label: &str, row: &AblationRow, m: &MetricsReport) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
        label,
        row.heads,
        row.edge_features as u8,
        row.rel as u8,
        row.virtual_nodes as u8,
        row.virtual_edges as u8,
        m.mee,
        m.mae,
        m.mse,
        m.rigid_mee,
        m.soft_mee,
        m.ree,
        m.infer_ms
    )
}
