//! Entity and relation embeddings with the translation score `‖h + r − t‖`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EntityId, RelationId, Triple};
use crate::error::{Error, Result};

/// Norm used by the score function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dissimilarity {
    #[default]
    L1,
    L2,
    /// Squared Euclidean distance. Margin computations use plain L2 for it,
    /// since the square is not a norm.
    L2sq,
}

impl Dissimilarity {
    /// Score of a residual vector.
    pub fn of(self, residual: impl Iterator<Item = f64>) -> f64 {
        match self {
            Dissimilarity::L1 => residual.map(f64::abs).sum(),
            Dissimilarity::L2 => residual.map(|x| x * x).sum::<f64>().sqrt(),
            Dissimilarity::L2sq => residual.map(|x| x * x).sum(),
        }
    }

    /// The norm used for margin geometry.
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Dissimilarity::L1 => v.iter().map(|x| x.abs()).sum(),
            Dissimilarity::L2 | Dissimilarity::L2sq => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// `norm(a − b)`.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            Dissimilarity::L1 => diff.map(f64::abs).sum(),
            Dissimilarity::L2 | Dissimilarity::L2sq => diff.map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Writes the (sub)gradient of the score w.r.t. the residual into `out`.
    fn gradient(self, residual: &[f64], out: &mut [f64]) {
        match self {
            Dissimilarity::L1 => {
                for (o, &x) in out.iter_mut().zip(residual) {
                    *o = if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Dissimilarity::L2 => {
                let norm = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (o, &x) in out.iter_mut().zip(residual) {
                        *o = x / norm;
                    }
                } else {
                    out.fill(0.0);
                }
            }
            Dissimilarity::L2sq => {
                for (o, &x) in out.iter_mut().zip(residual) {
                    *o = 2.0 * x;
                }
            }
        }
    }
}

impl fmt::Display for Dissimilarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dissimilarity::L1 => "l1",
            Dissimilarity::L2 => "l2",
            Dissimilarity::L2sq => "l2sq",
        })
    }
}

impl FromStr for Dissimilarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Dissimilarity::L1),
            "l2" => Ok(Dissimilarity::L2),
            "l2sq" | "l2-squared" => Ok(Dissimilarity::L2sq),
            other => Err(Error::Argument(format!("unknown dissimilarity {other:?}"))),
        }
    }
}

/// Residual subgradients of an active hinge term.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeGradient {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Dense `|E| × d` and `|R| × d` embedding matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    dissimilarity: Dissimilarity,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

/// `‖h + r − t‖`, evaluated component-wise as `(h + r) − t`.
#[inline]
pub fn translation_score(dis: Dissimilarity, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    dis.of(h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t))
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn project_to_unit_ball(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl EmbeddingModel {
    /// Uniform initialization in `[−6/√d, 6/√d]` followed by unit L2
    /// normalization of every relation and entity vector.
    ///
    /// Draw order: all entity components row by row, then all relation
    /// components, from `ChaCha8Rng::seed_from_u64(seed)`.
    pub fn init(
        n_entities: usize,
        n_relations: usize,
        dim: usize,
        dissimilarity: Dissimilarity,
        seed: u64,
    ) -> Result<Self> {
        if n_entities == 0 || n_relations == 0 || dim == 0 {
            return Err(Error::Argument(format!(
                "model sizes must be positive (|E|={n_entities}, |R|={n_relations}, d={dim})"
            )));
        }
        let bound = 6.0 / (dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entities: Vec<f64> = (0..n_entities * dim)
            .map(|_| dist.sample(&mut rng))
            .collect();
        let mut relations: Vec<f64> = (0..n_relations * dim)
            .map(|_| dist.sample(&mut rng))
            .collect();
        relations.chunks_exact_mut(dim).for_each(normalize);
        entities.chunks_exact_mut(dim).for_each(normalize);
        Ok(EmbeddingModel {
            dim,
            dissimilarity,
            entities,
            relations,
        })
    }

    pub fn from_parts(
        dim: usize,
        dissimilarity: Dissimilarity,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || !entities.len().is_multiple_of(dim) || !relations.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "matrix lengths {} and {} are not multiples of d={dim}",
                entities.len(),
                relations.len()
            )));
        }
        if entities.iter().chain(&relations).any(|x| !x.is_finite()) {
            return Err(Error::Argument("embeddings must be finite".into()));
        }
        Ok(EmbeddingModel {
            dim,
            dissimilarity,
            entities,
            relations,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dissimilarity(&self) -> Dissimilarity {
        self.dissimilarity
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let i = e as usize * self.dim;
        &self.entities[i..i + self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let i = r as usize * self.dim;
        &self.relations[i..i + self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let i = e as usize * self.dim;
        &mut self.entities[i..i + self.dim]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        let i = r as usize * self.dim;
        &mut self.relations[i..i + self.dim]
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relations
    }

    pub fn entity_matrix_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relation_matrix_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    fn check(&self, t: &Triple) -> Result<()> {
        if t.head as usize >= self.num_entities()
            || t.tail as usize >= self.num_entities()
            || t.relation as usize >= self.num_relations()
        {
            return Err(Error::Argument(format!(
                "triple {t:?} out of range for model with |E|={} |R|={}",
                self.num_entities(),
                self.num_relations()
            )));
        }
        Ok(())
    }

    /// `f_r(h, t) = ‖h + r − t‖` under the configured dissimilarity.
    pub fn score(&self, t: &Triple) -> Result<f64> {
        self.check(t)?;
        Ok(self.score_unchecked(t))
    }

    /// [`score`](Self::score) without the range check; panics on bad ids.
    pub fn score_unchecked(&self, t: &Triple) -> f64 {
        translation_score(
            self.dissimilarity,
            self.entity(t.head),
            self.relation(t.relation),
            self.entity(t.tail),
        )
    }

    /// `max(0, f(pos) + margin − f(neg))`.
    pub fn hinge_loss(&self, pos: &Triple, neg: &Triple, margin: f64) -> Result<f64> {
        check_pair(pos, neg, margin)?;
        let sp = self.score(pos)?;
        let sn = self.score(neg)?;
        Ok(hinge(sp, sn, margin))
    }

    /// Subgradients of the two scores with respect to their residuals
    /// `h + r − t`, or `None` when the hinge is inactive.
    ///
    /// By the chain rule the loss gradient is `pos` for `h`, `−pos` for `t`,
    /// `−neg` for `h′`, `neg` for `t′` and `pos − neg` for the shared `r`.
    pub fn hinge_gradient(
        &self,
        pos: &Triple,
        neg: &Triple,
        margin: f64,
    ) -> Result<(f64, Option<HingeGradient>)> {
        check_pair(pos, neg, margin)?;
        self.check(pos)?;
        self.check(neg)?;
        let d = self.dim;
        let mut res_pos = vec![0.0; d];
        let mut res_neg = vec![0.0; d];
        self.residual(pos, &mut res_pos);
        self.residual(neg, &mut res_neg);
        let sp = self.dissimilarity.of(res_pos.iter().copied());
        let sn = self.dissimilarity.of(res_neg.iter().copied());
        let loss = hinge(sp, sn, margin);
        if !(loss > 0.0) {
            return Ok((loss, None));
        }
        let mut g_pos = vec![0.0; d];
        let mut g_neg = vec![0.0; d];
        self.dissimilarity.gradient(&res_pos, &mut g_pos);
        self.dissimilarity.gradient(&res_neg, &mut g_neg);
        Ok((
            loss,
            Some(HingeGradient {
                pos: g_pos,
                neg: g_neg,
            }),
        ))
    }

    /// One SGD update on the hinge loss of a (positive, negative) pair.
    /// Returns the loss before the update; the model is untouched when it is 0.
    ///
    /// Both residual gradients are taken at the current parameters, then per
    /// component in this order: `h −= λg`, `t += λg`, `r −= λg`, `h′ += λg′`,
    /// `t′ −= λg′`, `r += λg′`. Touched entities are projected back into the
    /// unit L2 ball afterwards.
    pub fn sgd_step(&mut self, pos: &Triple, neg: &Triple, margin: f64, lr: f64) -> Result<f64> {
        let (loss, grad) = self.hinge_gradient(pos, neg, margin)?;
        let Some(HingeGradient {
            pos: g_pos,
            neg: g_neg,
        }) = grad
        else {
            return Ok(loss);
        };
        let d = self.dim;
        let (h, t, r) = (
            pos.head as usize * d,
            pos.tail as usize * d,
            pos.relation as usize * d,
        );
        let (hn, tn) = (neg.head as usize * d, neg.tail as usize * d);
        for k in 0..d {
            let gp = lr * g_pos[k];
            let gn = lr * g_neg[k];
            self.entities[h + k] -= gp;
            self.entities[t + k] += gp;
            self.relations[r + k] -= gp;
            self.entities[hn + k] += gn;
            self.entities[tn + k] -= gn;
            self.relations[r + k] += gn;
        }
        for e in [pos.head, pos.tail, neg.head, neg.tail] {
            project_to_unit_ball(self.entity_mut(e));
        }
        Ok(loss)
    }

    fn residual(&self, t: &Triple, out: &mut [f64]) {
        let h = self.entity(t.head);
        let r = self.relation(t.relation);
        let tl = self.entity(t.tail);
        for (k, o) in out.iter_mut().enumerate() {
            *o = h[k] + r[k] - tl[k];
        }
    }

    /// Writes the matrices as text: a header line
    /// `transa-model <|E|> <|R|> <d> <dissimilarity>` then one tab-separated
    /// row per entity followed by one row per relation.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(
                w,
                "transa-model\t{}\t{}\t{}\t{}",
                self.num_entities(),
                self.num_relations(),
                self.dim,
                self.dissimilarity
            )?;
            for row in self
                .entities
                .chunks_exact(self.dim)
                .chain(self.relations.chunks_exact(self.dim))
            {
                let mut first = true;
                for x in row {
                    if !first {
                        w.write_all(b"\t")?;
                    }
                    first = false;
                    write!(w, "{x}")?;
                }
                w.write_all(b"\n")?;
            }
            w.flush()
        };
        body().map_err(|e| Error::io(ctx(), e))
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::io(format!("reading {}", path.display()), e))?,
            None => return Err(parse_err(1, "empty model file".into())),
        };
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 5 || fields[0] != "transa-model" {
            return Err(parse_err(
                1,
                "expected `transa-model <|E|> <|R|> <d> <dissimilarity>` header".into(),
            ));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(1, format!("bad size {s:?}")))
        };
        let (n_e, n_r, dim) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        let dissimilarity: Dissimilarity = fields[4].parse()?;
        let mut values = Vec::with_capacity((n_e + n_r) * dim);
        let mut rows = 0;
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            if line.is_empty() {
                continue;
            }
            let before = values.len();
            for x in line.split('\t') {
                values.push(
                    x.parse::<f64>()
                        .map_err(|_| parse_err(i + 1, format!("bad number {x:?}")))?,
                );
            }
            if values.len() - before != dim {
                return Err(parse_err(
                    i + 1,
                    format!("expected {dim} values, found {}", values.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != n_e + n_r {
            return Err(parse_err(
                1,
                format!("expected {} rows, found {rows}", n_e + n_r),
            ));
        }
        let relations = values.split_off(n_e * dim);
        EmbeddingModel::from_parts(dim, dissimilarity, values, relations)
    }
}

/// `max(0, sp + margin − sn)` that lets NaN through, so a diverged model is
/// reported rather than silently treated as having zero loss.
fn hinge(sp: f64, sn: f64, margin: f64) -> f64 {
    let raw = sp + margin - sn;
    if raw.is_nan() {
        raw
    } else {
        raw.max(0.0)
    }
}

fn check_pair(pos: &Triple, neg: &Triple, margin: f64) -> Result<()> {
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::Argument(format!(
            "margin must be a finite non-negative number, got {margin}"
        )));
    }
    if pos.relation != neg.relation {
        return Err(Error::Argument(format!(
            "positive and negative triples must share a relation ({} vs {})",
            pos.relation, neg.relation
        )));
    }
    Ok(())
}
