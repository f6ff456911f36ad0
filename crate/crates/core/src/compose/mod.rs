//! Compositional models: phrase embeddings from word-level parameters.
//!
//! | model | adjective-noun       | subject-relation-object          |
//! |-------|----------------------|----------------------------------|
//! | Add   | `a + n`              | `s + R + o`                      |
//! | Mult  | `a ⊙ n`              | `s ⊙ R ⊙ o`                      |
//! | Conv  | `a ⊛ n`              | `s ⊛ R ⊛ o`                      |
//! | TL    | `A · n`              | `s ⊙ (R · o)`                    |
//! | RF    | `a⊛r_a + n⊛r_n`      | `s⊛r_s + R⊛r_R + o⊛r_o`          |
//!
//! Three-word folds of the commutative models are evaluated with the
//! relation applied last (`R + (s + o)`, `R ⊙ (s ⊙ o)`, `R ⊛ (s ⊛ o)`), which
//! makes swapping subject and object bit-exact for Add and Mult.

pub mod hrr;
mod params;

pub use params::{
    init_params, param_count, param_keys, ComposerParams, Gradients, ModelKind, ParamKey, Role,
    CHECKPOINT_VERSION, MATRIX_INIT_STD,
};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scenegen::{Phrase, Word};
use hrr::{circ_conv, circ_conv3, circ_corr};

fn vector(params: &ComposerParams, w: Word) -> Result<&[f64]> {
    params
        .get(ParamKey::Vector(w))
        .map_err(|_| Error::Vocabulary(format!("`{w}` has no vector in model {}", params.model())))
}

fn matrix(params: &ComposerParams, w: Word) -> Result<&[f64]> {
    params
        .get(ParamKey::Matrix(w))
        .map_err(|_| Error::Vocabulary(format!("`{w}` has no matrix in model {}", params.model())))
}

fn role(params: &ComposerParams, r: Role) -> Result<&[f64]> {
    params.get(ParamKey::Role(r))
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Phrase embedding under `params`.
pub fn compose(model: ModelKind, phrase: &Phrase, params: &ComposerParams) -> Result<Embedding> {
    if model != params.model() {
        return Err(Error::Config(format!(
            "parameters belong to {}, not {model}",
            params.model()
        )));
    }
    compose_with(params, phrase)
}

/// [`compose`] using the model the parameters were built for.
pub fn compose_with(params: &ComposerParams, phrase: &Phrase) -> Result<Embedding> {
    let out = match *phrase {
        Phrase::AdjNoun { adjective, noun } => {
            let (aw, nw) = (Word::Color(adjective), Word::Shape(noun));
            match params.model() {
                ModelKind::Add => sum(vector(params, aw)?, vector(params, nw)?),
                ModelKind::Mult => hadamard(vector(params, aw)?, vector(params, nw)?),
                ModelKind::Conv => circ_conv(vector(params, aw)?, vector(params, nw)?)?,
                ModelKind::TL => linalg::matvec(matrix(params, aw)?, vector(params, nw)?),
                ModelKind::RF => {
                    let mut v = circ_conv(vector(params, aw)?, role(params, Role::Adjective)?)?;
                    linalg::add_assign(&mut v, &circ_conv(vector(params, nw)?, role(params, Role::Noun)?)?);
                    v
                }
            }
        }
        Phrase::Rel {
            subject,
            relation,
            object,
        } => {
            let (sw, rw, ow) = (Word::Shape(subject), Word::Relation(relation), Word::Shape(object));
            match params.model() {
                ModelKind::Add => sum(vector(params, rw)?, &sum(vector(params, sw)?, vector(params, ow)?)),
                ModelKind::Mult => hadamard(
                    vector(params, rw)?,
                    &hadamard(vector(params, sw)?, vector(params, ow)?),
                ),
                ModelKind::Conv => circ_conv3(vector(params, sw)?, vector(params, rw)?, vector(params, ow)?)?,
                ModelKind::TL => hadamard(
                    vector(params, sw)?,
                    &linalg::matvec(matrix(params, rw)?, vector(params, ow)?),
                ),
                ModelKind::RF => {
                    let mut v = circ_conv(vector(params, sw)?, role(params, Role::Subject)?)?;
                    linalg::add_assign(&mut v, &circ_conv(vector(params, rw)?, role(params, Role::Relation)?)?);
                    linalg::add_assign(&mut v, &circ_conv(vector(params, ow)?, role(params, Role::Object)?)?);
                    v
                }
            }
        }
    };
    Ok(Embedding(out))
}

fn add_to(grads: &mut Gradients, params: &ComposerParams, key: ParamKey, g: &[f64]) -> Result<()> {
    linalg::add_assign(grads.slot_mut(params, key)?, g);
    Ok(())
}

/// Accumulates `∂(upstream · compose(phrase)) / ∂θ` into `grads`.
///
/// Convolution terms use the adjoint `∂(u · (a ⊛ b)) / ∂a = circ_corr(b, u)`.
pub fn backward_into(
    params: &ComposerParams,
    phrase: &Phrase,
    upstream: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    if upstream.len() != params.dim() {
        return Err(Error::Domain(format!(
            "upstream has dimension {}, parameters {}",
            upstream.len(),
            params.dim()
        )));
    }
    let u = upstream;
    let vk = ParamKey::Vector;
    match *phrase {
        Phrase::AdjNoun { adjective, noun } => {
            let (aw, nw) = (Word::Color(adjective), Word::Shape(noun));
            match params.model() {
                ModelKind::Add => {
                    vector(params, aw)?;
                    vector(params, nw)?;
                    add_to(grads, params, vk(aw), u)?;
                    add_to(grads, params, vk(nw), u)?;
                }
                ModelKind::Mult => {
                    let (a, n) = (vector(params, aw)?, vector(params, nw)?);
                    let ga = hadamard(u, n);
                    let gn = hadamard(u, a);
                    add_to(grads, params, vk(aw), &ga)?;
                    add_to(grads, params, vk(nw), &gn)?;
                }
                ModelKind::Conv => {
                    let (a, n) = (vector(params, aw)?, vector(params, nw)?);
                    let ga = circ_corr(n, u)?;
                    let gn = circ_corr(a, u)?;
                    add_to(grads, params, vk(aw), &ga)?;
                    add_to(grads, params, vk(nw), &gn)?;
                }
                ModelKind::TL => {
                    let (m, n) = (matrix(params, aw)?, vector(params, nw)?);
                    let gn = linalg::matvec_t(m, u);
                    let n = n.to_vec();
                    linalg::add_outer(grads.slot_mut(params, ParamKey::Matrix(aw))?, u, &n);
                    add_to(grads, params, vk(nw), &gn)?;
                }
                ModelKind::RF => {
                    let pairs = [(aw, Role::Adjective), (nw, Role::Noun)];
                    rf_backward(params, &pairs, u, grads)?;
                }
            }
        }
        Phrase::Rel {
            subject,
            relation,
            object,
        } => {
            let (sw, rw, ow) = (Word::Shape(subject), Word::Relation(relation), Word::Shape(object));
            match params.model() {
                ModelKind::Add => {
                    for w in [sw, rw, ow] {
                        vector(params, w)?;
                    }
                    for w in [sw, rw, ow] {
                        add_to(grads, params, vk(w), u)?;
                    }
                }
                ModelKind::Mult => {
                    let (s, r, o) = (vector(params, sw)?, vector(params, rw)?, vector(params, ow)?);
                    let gs = hadamard(u, &hadamard(r, o));
                    let gr = hadamard(u, &hadamard(s, o));
                    let go = hadamard(u, &hadamard(s, r));
                    add_to(grads, params, vk(sw), &gs)?;
                    add_to(grads, params, vk(rw), &gr)?;
                    add_to(grads, params, vk(ow), &go)?;
                }
                ModelKind::Conv => {
                    let (s, r, o) = (vector(params, sw)?, vector(params, rw)?, vector(params, ow)?);
                    let gs = circ_corr(&circ_conv(r, o)?, u)?;
                    let gr = circ_corr(&circ_conv(s, o)?, u)?;
                    let go = circ_corr(&circ_conv(s, r)?, u)?;
                    add_to(grads, params, vk(sw), &gs)?;
                    add_to(grads, params, vk(rw), &gr)?;
                    add_to(grads, params, vk(ow), &go)?;
                }
                ModelKind::TL => {
                    let (s, m, o) = (vector(params, sw)?, matrix(params, rw)?, vector(params, ow)?);
                    let ro = linalg::matvec(m, o);
                    let gs = hadamard(u, &ro);
                    let w = hadamard(u, s);
                    let go = linalg::matvec_t(m, &w);
                    let o = o.to_vec();
                    add_to(grads, params, vk(sw), &gs)?;
                    linalg::add_outer(grads.slot_mut(params, ParamKey::Matrix(rw))?, &w, &o);
                    add_to(grads, params, vk(ow), &go)?;
                }
                ModelKind::RF => {
                    let pairs = [(sw, Role::Subject), (rw, Role::Relation), (ow, Role::Object)];
                    rf_backward(params, &pairs, u, grads)?;
                }
            }
        }
    }
    Ok(())
}

fn rf_backward(
    params: &ComposerParams,
    pairs: &[(Word, Role)],
    u: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    let mut updates = Vec::with_capacity(pairs.len() * 2);
    for &(w, r) in pairs {
        let filler = vector(params, w)?;
        let role_vec = role(params, r)?;
        updates.push((ParamKey::Vector(w), circ_corr(role_vec, u)?));
        updates.push((ParamKey::Role(r), circ_corr(filler, u)?));
    }
    for (k, g) in updates {
        add_to(grads, params, k, &g)?;
    }
    Ok(())
}

/// Gradient of `upstream · compose(model, phrase, params)` with respect to
/// every parameter; arrays the phrase does not use stay zero and untouched.
pub fn backward(
    model: ModelKind,
    phrase: &Phrase,
    params: &ComposerParams,
    upstream: &[f64],
) -> Result<Gradients> {
    if model != params.model() {
        return Err(Error::Config(format!(
            "parameters belong to {}, not {model}",
            params.model()
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    backward_into(params, phrase, upstream, &mut grads)?;
    Ok(grads)
}
