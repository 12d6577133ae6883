//! Token embeddings as CSV, for plotting with external tools.

use std::path::Path;

use rayon::prelude::*;

use crate::config::Tap;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::{ParamStore, Session};
use crate::tensor::Scalar;

/// CSV writer with CRLF record terminators.
pub fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Every token of the last encoder layer, before (`input_n`) or after
/// (`output_n`) that layer, for the dataset rows in `rows`.
///
/// Columns: `sample_id,class,submode,token,role,f0..f{d-1}`. Rows follow
/// `rows`, then token order.
pub fn embeddings_csv<T: Scalar>(model: &Model, store: &ParamStore<T>, data: &Dataset, rows: &[usize], tap: Tap) -> Result<String> {
    let d = model.backbone.cfg.width;
    let depth = model.backbone.cfg.depth;
    if let Some(&r) = rows.iter().find(|&&r| r >= data.len()) {
        return Err(Error::Config(format!("row {r} outside a dataset of {} rows", data.len())));
    }
    let blocks = rows
        .par_iter()
        .map(|&r| {
            let mut s = Session::new(store);
            let seq = match tap {
                Tap::OutputN => model.tokens(&mut s, &data.clouds[r])?,
                Tap::InputN => {
                    let start = model.prefix(&mut s, &data.clouds[r], 0)?;
                    model.prompt.input_of(&model.backbone, &mut s, start, depth)?
                }
            };
            let values = s.g.value(seq.var);
            let row = &data.rows[r];
            let records: Vec<Vec<String>> = seq
                .roles
                .iter()
                .enumerate()
                .map(|(t, role)| {
                    let mut rec = vec![r.to_string(), row.class_id.to_string(), row.submode.to_string(), t.to_string(), role.name().into()];
                    rec.extend(values[t * d..(t + 1) * d].iter().map(|v| v.to_string()));
                    rec
                })
                .collect();
            Ok(records)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv_writer(Vec::new());
    let mut header: Vec<String> = ["sample_id", "class", "submode", "token", "role"].map(String::from).to_vec();
    header.extend((0..d).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for rec in blocks.iter().flatten() {
        w.write_record(rec).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

/// Writes [`embeddings_csv`] to `path`; returns the number of data rows.
pub fn export_embeddings<T: Scalar>(
    model: &Model,
    store: &ParamStore<T>,
    data: &Dataset,
    rows: &[usize],
    tap: Tap,
    path: &Path,
) -> Result<usize> {
    let csv = embeddings_csv(model, store, data, rows, tap)?;
    std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    Ok(csv.lines().count() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;
    use crate::data::{DatasetSpec, ShapeKind, Split, SubMode};
    use crate::prompting::{StrategyConfig, StrategyKind};
    use crate::training::HeadConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(kind: StrategyKind) -> (Model, ParamStore<f32>, Dataset) {
        let cfg = BackboneConfig {
            depth: 2,
            width: 8,
            heads: 2,
            ffn_mult: 2,
            patches: 6,
            patch_points: 4,
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::build(cfg, &StrategyConfig::new(kind), &HeadConfig::default(), &mut store, &mut rng).unwrap();
        let data = Dataset::generate(&DatasetSpec {
            classes: vec![ShapeKind::Sphere, ShapeKind::Cube],
            samples_per_cell: 2,
            points: 32,
            submodes: vec![SubMode::Clean, SubMode::OutlierClutter],
            train_fraction: 0.5,
            seed: 0,
        })
        .unwrap();
        (model, store, data)
    }

    fn parse(csv: &str) -> Vec<Vec<String>> {
        csv.split_terminator("\r\n").map(|l| l.split(',').map(str::to_string).collect()).collect()
    }

    #[test]
    fn row_count_and_columns() {
        for kind in [StrategyKind::HeadOnly, StrategyKind::VptDeep, StrategyKind::Idpt] {
            let (model, store, data) = setup(kind);
            let rows = data.split(Split::Test);
            for tap in [Tap::InputN, Tap::OutputN] {
                let csv = embeddings_csv(&model, &store, &data, &rows, tap).unwrap();
                let table = parse(&csv);
                let tokens = 1 + model.prompt.block_len() + 6;
                assert_eq!(table.len() - 1, rows.len() * tokens, "{kind} {tap:?}");
                assert_eq!(table[0][..6], ["sample_id", "class", "submode", "token", "role", "f0"]);
                assert!(table.iter().all(|r| r.len() == 5 + 8));
                let roles: Vec<&str> = table[1..=tokens].iter().map(|r| r[4].as_str()).collect();
                assert_eq!(roles[0], "cls");
                assert_eq!(roles.iter().filter(|&&r| r == "prompt").count(), model.prompt.block_len());
                assert_eq!(table[1][0], rows[0].to_string());
                assert_eq!(table[1][2], data.rows[rows[0]].submode.name());
            }
        }
    }

    #[test]
    fn taps_differ_and_output_matches_the_model() {
        let (model, store, data) = setup(StrategyKind::Idpt);
        let rows = vec![0, 3];
        let input = embeddings_csv(&model, &store, &data, &rows, Tap::InputN).unwrap();
        let output = embeddings_csv(&model, &store, &data, &rows, Tap::OutputN).unwrap();
        assert_ne!(input, output);

        let mut s = Session::new(&store);
        let seq = model.tokens(&mut s, &data.clouds[3]).unwrap();
        let want: Vec<f32> = s.g.value(seq.var).to_vec();
        let table = parse(&output);
        let n = seq.roles.len();
        let got: Vec<f32> = table[1 + n..1 + 2 * n].iter().flat_map(|r| r[5..].iter().map(|v| v.parse::<f32>().unwrap())).collect();
        assert_eq!(got, want);

        // Running the last layer on the exported input reproduces the output.
        let cols = |csv: &str| -> Vec<f32> {
            parse(csv)[1..].iter().flat_map(|r| r[5..].iter().map(|v| v.parse::<f32>().unwrap()).collect::<Vec<_>>()).collect()
        };
        let (xin, xout) = (cols(&input), cols(&output));
        let mut s = Session::new(&store);
        let x = s.input(vec![n, 8], xin[n * 8..].to_vec()).unwrap();
        let y = model.backbone.layers[1].forward(&mut s, x, 2).unwrap();
        for (a, b) in s.g.value(y).iter().zip(&xout[n * 8..]) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn export_is_byte_reproducible() {
        let (model, store, data) = setup(StrategyKind::Idpt);
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<usize> = (0..data.len()).collect();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let n = export_embeddings(&model, &store, &data, &rows, Tap::InputN, &a).unwrap();
        export_embeddings(&model, &store, &data, &rows, Tap::InputN, &b).unwrap();
        assert_eq!(n, rows.len() * (1 + 1 + 6));
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert!(embeddings_csv(&model, &store, &data, &[data.len()], Tap::InputN).is_err());
    }

    #[test]
    fn records_are_rfc4180() {
        let mut w = csv_writer(Vec::new());
        w.write_record(["plain", "a,b", "say \"hi\""]).unwrap();
        let out = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(out, "plain,\"a,b\",\"say \"\"hi\"\"\"\r\n");
    }
}
