//! Borda ranks and top-k win rates on a hand-made metrics grid.

use anyhow::Result;
use survhte::metrics::{rank_table, AuxMetrics, DatasetKey, MethodKey, MetricRecord, RankMetric};

fn main() -> Result<()> {
    // rows: datasets, columns: methods
    let grid = [[0.30, 0.20, 0.50], [0.10, 0.10, 0.40], [0.25, 0.35, 0.15]];
    let names = ["T", "DR", "S"];
    let mut records = Vec::new();
    for (d, row) in grid.iter().enumerate() {
        for (m, &rmse) in row.iter().enumerate() {
            records.push(MetricRecord {
                dataset: DatasetKey {
                    scenario: "C".into(),
                    config: "RCT-50".into(),
                    repeat: d,
                },
                method: MethodKey {
                    family: "imputed_meta".into(),
                    variant: names[m].into(),
                    imputer: "MARGIN".into(),
                    base_learner: "lasso".into(),
                },
                cate_rmse: rmse,
                ate_bias: 0.0,
                aux: AuxMetrics::default(),
            });
        }
    }
    let table = rank_table(&records, RankMetric::CateRmse, &[1, 2], false)?;
    print!("{}", table.render_borda_markdown());
    println!();
    print!("{}", table.render_winrates_csv());
    Ok(())
}
