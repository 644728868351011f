use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{KnowledgeGraph, Splits, Triple, Vocab};
use crate::error::{Error, Result};

/// How the three fields of a triple line are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TripleFormat {
    /// Entity and relation names; ids assigned in first-appearance order.
    #[default]
    Names,
    /// Non-negative integer ids.
    Ids,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub format: TripleFormat,
    /// Valid/test lines carry a fourth `1`/`-1` label column.
    pub labeled_eval: bool,
}

struct RawLine {
    fields: [String; 3],
    positive: bool,
}

fn read_lines(path: &Path, labeled: bool) -> Result<Vec<RawLine>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let expected = if labeled { 4 } else { 3 };
        if parts.len() != expected {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!(
                    "expected {expected} tab-separated fields, found {}",
                    parts.len()
                ),
            });
        }
        let positive = if labeled {
            match parts[3].trim() {
                "1" | "+1" => true,
                "-1" => false,
                other => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line: i + 1,
                        message: format!("label must be 1 or -1, found {other:?}"),
                    })
                }
            }
        } else {
            true
        };
        out.push(RawLine {
            fields: [
                parts[0].to_owned(),
                parts[1].to_owned(),
                parts[2].to_owned(),
            ],
            positive,
        });
    }
    Ok(out)
}

fn parse_id(path: &Path, line: usize, s: &str) -> Result<u32> {
    s.trim().parse::<u32>().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("expected a non-negative integer id, found {s:?}"),
    })
}

/// Loads the three splits of a dataset.
///
/// The vocabulary is built from the union of all splits (train, then valid,
/// then test), so ids are deterministic for a given set of files.
pub fn load_graph(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
    opts: LoadOptions,
) -> Result<KnowledgeGraph> {
    let files = [
        (train_path, read_lines(train_path, false)?),
        (valid_path, read_lines(valid_path, opts.labeled_eval)?),
        (test_path, read_lines(test_path, opts.labeled_eval)?),
    ];
    if files[0].1.is_empty() {
        return Err(Error::Validation(format!(
            "training split {} is empty",
            train_path.display()
        )));
    }

    let mut encoded: Vec<Vec<(Triple, bool)>> = Vec::with_capacity(3);
    let (entities, relations) = match opts.format {
        TripleFormat::Names => {
            let mut ents = Vocab::new();
            let mut rels = Vocab::new();
            for (_, lines) in &files {
                encoded.push(
                    lines
                        .iter()
                        .map(|l| {
                            let h = ents.intern(&l.fields[0]);
                            let r = rels.intern(&l.fields[1]);
                            let t = ents.intern(&l.fields[2]);
                            (Triple::new(h, r, t), l.positive)
                        })
                        .collect(),
                );
            }
            (ents, rels)
        }
        TripleFormat::Ids => {
            let mut max_e = 0u32;
            let mut max_r = 0u32;
            for (path, lines) in &files {
                let mut split = Vec::with_capacity(lines.len());
                for (i, l) in lines.iter().enumerate() {
                    let h = parse_id(path, i + 1, &l.fields[0])?;
                    let r = parse_id(path, i + 1, &l.fields[1])?;
                    let t = parse_id(path, i + 1, &l.fields[2])?;
                    max_e = max_e.max(h).max(t);
                    max_r = max_r.max(r);
                    split.push((Triple::new(h, r, t), l.positive));
                }
                encoded.push(split);
            }
            (
                Vocab::numeric(max_e as usize + 1),
                Vocab::numeric(max_r as usize + 1),
            )
        }
    };

    let split = |v: &[(Triple, bool)], positive: bool| -> Vec<Triple> {
        v.iter()
            .filter(|(_, p)| *p == positive)
            .map(|(t, _)| *t)
            .collect()
    };
    let splits = Splits {
        train: split(&encoded[0], true),
        valid: split(&encoded[1], true),
        test: split(&encoded[2], true),
        valid_neg: split(&encoded[1], false),
        test_neg: split(&encoded[2], false),
    };
    KnowledgeGraph::new(entities, relations, splits)
}

const SPLIT_FILES: [&str; 5] = [
    "train.tsv",
    "valid.tsv",
    "test.tsv",
    "valid_neg.tsv",
    "test_neg.tsv",
];

/// Writes `entities.tsv`, `relations.tsv` and one id-triple file per split.
/// Negative files are only written when the graph carries labeled negatives.
pub fn save_serialized(graph: &KnowledgeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    write_vocab(&dir.join("entities.tsv"), graph.entities())?;
    write_vocab(&dir.join("relations.tsv"), graph.relations())?;
    let splits: [&[Triple]; 5] = [
        graph.train(),
        graph.valid(),
        graph.test(),
        graph.valid_negatives(),
        graph.test_negatives(),
    ];
    for (i, (name, triples)) in SPLIT_FILES.iter().zip(splits).enumerate() {
        if i >= 3 && triples.is_empty() {
            continue;
        }
        write_triples(&dir.join(name), triples)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    for (id, name) in vocab.names().iter().enumerate() {
        writeln!(w, "{id}\t{name}").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn write_triples(path: &Path, triples: &[Triple]) -> Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    for t in triples {
        writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut names = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.is_empty() {
            continue;
        }
        let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: "expected `id<TAB>name`".into(),
        })?;
        let id = parse_id(path, i + 1, id)?;
        if id as usize != names.len() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!(
                    "ids must be dense and ordered, expected {} found {id}",
                    names.len()
                ),
            });
        }
        names.push(name.to_owned());
    }
    Vocab::from_names(names)
}

fn read_id_triples(path: &Path) -> Result<Vec<Triple>> {
    read_lines(path, false)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(Triple::new(
                parse_id(path, i + 1, &l.fields[0])?,
                parse_id(path, i + 1, &l.fields[1])?,
                parse_id(path, i + 1, &l.fields[2])?,
            ))
        })
        .collect()
}

/// Reads a directory written by [`save_serialized`].
pub fn load_serialized(dir: &Path) -> Result<KnowledgeGraph> {
    let entities = read_vocab(&dir.join("entities.tsv"))?;
    let relations = read_vocab(&dir.join("relations.tsv"))?;
    let mut parts: Vec<Vec<Triple>> = Vec::with_capacity(5);
    for (i, name) in SPLIT_FILES.iter().enumerate() {
        let path = dir.join(name);
        if i >= 3 && !path.exists() {
            parts.push(Vec::new());
            continue;
        }
        parts.push(read_id_triples(&path)?);
    }
    let mut parts = parts.into_iter();
    let mut next = || parts.next().unwrap_or_default();
    let splits = Splits {
        train: next(),
        valid: next(),
        test: next(),
        valid_neg: next(),
        test_neg: next(),
    };
    KnowledgeGraph::new(entities, relations, splits)
}
