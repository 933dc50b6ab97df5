//! Finite powerset lattices used by the analyses.
//!
//! All three concrete lattices are powersets of a finite universe:
//! variables, arithmetic expressions, or `(variable, label)` definition
//! pairs. The pointwise order on `V → P(L)` coincides with subset inclusion
//! on the pair set, so definition maps are stored as sets of [`Def`] pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Debug, Display};
use std::sync::Arc;

use serde::Serialize;

use crate::syntax::{AExp, Label, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeOrder {
    Subset,
    ReverseSubset,
    PointwiseSubset,
}

impl LatticeOrder {
    /// Whether `≤` is plain set inclusion on members.
    fn is_inclusion(self) -> bool {
        matches!(self, LatticeOrder::Subset | LatticeOrder::PointwiseSubset)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("facts are drawn from different universes")]
    UniverseMismatch,
    #[error("facts use different orders ({0:?} vs {1:?})")]
    OrderMismatch(LatticeOrder, LatticeOrder),
    #[error("element {0} is not in the universe")]
    OutsideUniverse(String),
}

/// A member of some fact universe. `render` controls how a whole fact is
/// printed and serialized.
pub trait Element: Ord + Clone + Debug + Display + Send + Sync + 'static {
    fn render_text(members: &BTreeSet<Self>, _universe: &BTreeSet<Self>) -> String {
        let items: Vec<String> = members.iter().map(|m| m.to_string()).collect();
        format!("{{{}}}", items.join(", "))
    }

    fn render_json(members: &BTreeSet<Self>, _universe: &BTreeSet<Self>) -> serde_json::Value {
        serde_json::Value::Array(
            members
                .iter()
                .map(|m| serde_json::Value::String(m.to_string()))
                .collect(),
        )
    }
}

impl Element for Var {}
impl Element for AExp {}

/// A reaching definition: variable `var` was last assigned at `label`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Def {
    pub var: Var,
    pub label: Label,
}

impl Def {
    pub fn new(var: Var, label: Label) -> Self {
        Def { var, label }
    }
}

impl Display for Def {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.var, self.label)
    }
}

impl Debug for Def {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Display::fmt(self, f)
    }
}

fn defs_by_var(members: &BTreeSet<Def>, universe: &BTreeSet<Def>) -> BTreeMap<Var, Vec<Label>> {
    let mut map: BTreeMap<Var, Vec<Label>> =
        universe.iter().map(|d| (d.var.clone(), Vec::new())).collect();
    for d in members {
        map.entry(d.var.clone()).or_default().push(d.label.clone());
    }
    map
}

impl Element for Def {
    fn render_text(members: &BTreeSet<Self>, universe: &BTreeSet<Self>) -> String {
        defs_by_var(members, universe)
            .into_iter()
            .map(|(v, ls)| {
                let ls: Vec<String> = ls.iter().map(|l| l.to_string()).collect();
                format!("{v}: {{{}}}", ls.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn render_json(members: &BTreeSet<Self>, universe: &BTreeSet<Self>) -> serde_json::Value {
        serde_json::Value::Object(
            defs_by_var(members, universe)
                .into_iter()
                .map(|(v, ls)| (v.to_string(), serde_json::json!(ls)))
                .collect(),
        )
    }
}

/// A lattice element: a subset of an explicit finite universe, tagged with
/// the order it is compared under.
#[derive(Clone)]
pub struct Fact<T: Element> {
    order: LatticeOrder,
    members: BTreeSet<T>,
    universe: Arc<BTreeSet<T>>,
}

impl<T: Element> PartialEq for Fact<T> {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.members == other.members && self.same_universe(other)
    }
}

impl<T: Element> Eq for Fact<T> {}

impl<T: Element> Debug for Fact<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.members).finish()
    }
}

impl<T: Element> Display for Fact<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&T::render_text(&self.members, &self.universe))
    }
}

impl<T: Element> Fact<T> {
    pub fn new(
        order: LatticeOrder,
        universe: Arc<BTreeSet<T>>,
        members: impl IntoIterator<Item = T>,
    ) -> Result<Self, LatticeError> {
        let members: BTreeSet<T> = members.into_iter().collect();
        if let Some(m) = members.iter().find(|m| !universe.contains(*m)) {
            return Err(LatticeError::OutsideUniverse(m.to_string()));
        }
        Ok(Fact {
            order,
            members,
            universe,
        })
    }

    /// Builds a fact keeping only the members that lie in the universe.
    pub fn clamped(
        order: LatticeOrder,
        universe: Arc<BTreeSet<T>>,
        members: impl IntoIterator<Item = T>,
    ) -> Self {
        let members = members.into_iter().filter(|m| universe.contains(m)).collect();
        Fact {
            order,
            members,
            universe,
        }
    }

    pub fn empty(order: LatticeOrder, universe: Arc<BTreeSet<T>>) -> Self {
        Fact {
            order,
            members: BTreeSet::new(),
            universe,
        }
    }

    pub fn full(order: LatticeOrder, universe: Arc<BTreeSet<T>>) -> Self {
        Fact {
            order,
            members: (*universe).clone(),
            universe,
        }
    }

    pub fn bottom(order: LatticeOrder, universe: Arc<BTreeSet<T>>) -> Self {
        if order.is_inclusion() {
            Fact::empty(order, universe)
        } else {
            Fact::full(order, universe)
        }
    }

    pub fn top(order: LatticeOrder, universe: Arc<BTreeSet<T>>) -> Self {
        if order.is_inclusion() {
            Fact::full(order, universe)
        } else {
            Fact::empty(order, universe)
        }
    }

    pub fn order(&self) -> LatticeOrder {
        self.order
    }

    pub fn members(&self) -> &BTreeSet<T> {
        &self.members
    }

    pub fn universe(&self) -> &Arc<BTreeSet<T>> {
        &self.universe
    }

    pub fn contains(&self, t: &T) -> bool {
        self.members.contains(t)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Same universe and order, different members (clamped to the universe).
    pub fn with_members(&self, members: impl IntoIterator<Item = T>) -> Self {
        Fact::clamped(self.order, self.universe.clone(), members)
    }

    pub fn to_json(&self) -> serde_json::Value {
        T::render_json(&self.members, &self.universe)
    }

    fn same_universe(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.universe, &other.universe) || self.universe == other.universe
    }

    fn compatible(&self, other: &Self) -> Result<(), LatticeError> {
        if self.order != other.order {
            return Err(LatticeError::OrderMismatch(self.order, other.order));
        }
        if !self.same_universe(other) {
            return Err(LatticeError::UniverseMismatch);
        }
        Ok(())
    }

    pub fn leq(&self, other: &Self) -> Result<bool, LatticeError> {
        self.compatible(other)?;
        Ok(if self.order.is_inclusion() {
            self.members.is_subset(&other.members)
        } else {
            self.members.is_superset(&other.members)
        })
    }

    pub fn join(&self, other: &Self) -> Result<Self, LatticeError> {
        self.compatible(other)?;
        Ok(if self.order.is_inclusion() {
            self.union(other)
        } else {
            self.intersection(other)
        })
    }

    pub fn meet(&self, other: &Self) -> Result<Self, LatticeError> {
        self.compatible(other)?;
        Ok(if self.order.is_inclusion() {
            self.intersection(other)
        } else {
            self.union(other)
        })
    }

    /// Set complement relative to the universe. It is the lattice complement
    /// under every order.
    pub fn complement(&self) -> Self {
        Fact {
            order: self.order,
            members: self.universe.difference(&self.members).cloned().collect(),
            universe: self.universe.clone(),
        }
    }

    // Order-independent set operations on members.

    pub fn union(&self, other: &Self) -> Self {
        Fact {
            order: self.order,
            members: self.members.union(&other.members).cloned().collect(),
            universe: self.universe.clone(),
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Fact {
            order: self.order,
            members: self.members.intersection(&other.members).cloned().collect(),
            universe: self.universe.clone(),
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Fact {
            order: self.order,
            members: self.members.difference(&other.members).cloned().collect(),
            universe: self.universe.clone(),
        }
    }

    pub fn insert(&mut self, t: T) -> bool {
        if self.universe.contains(&t) {
            self.members.insert(t)
        } else {
            false
        }
    }

    pub fn remove(&mut self, t: &T) -> bool {
        self.members.remove(t)
    }

    pub fn retain(&mut self, f: impl FnMut(&T) -> bool) {
        self.members.retain(f)
    }
}

impl Fact<Def> {
    /// `π(v)`: labels recorded for `v`.
    pub fn defs_of(&self, v: &Var) -> BTreeSet<Label> {
        self.members
            .iter()
            .filter(|d| &d.var == v)
            .map(|d| d.label.clone())
            .collect()
    }

    /// `π[v ↦ {l}]`.
    pub fn strong_update(&self, v: &Var, l: &Label) -> Self {
        let mut next = self.clone();
        next.members.retain(|d| &d.var != v);
        next.insert(Def::new(v.clone(), l.clone()));
        next
    }
}

/// `β_before(l') ⊆ β_before(l) ∪ D` for sets ordered by inclusion, under the
/// hypotheses `β_before(l) = (β_after(l) − D) ∪ U` and
/// `β_before(l') ⊆ β_after(l)`.
pub fn check_prediction_lemma_subset<T: Ord + Clone>(
    before: &BTreeSet<T>,
    _after: &BTreeSet<T>,
    before_succ: &BTreeSet<T>,
    defs: &BTreeSet<T>,
    _uses: &BTreeSet<T>,
) -> bool {
    let allowed: BTreeSet<T> = before.union(defs).cloned().collect();
    before_succ.is_subset(&allowed)
}

/// `β_before(l') ⊇ β_before(l) − U` for sets ordered by reverse inclusion,
/// under `β_before(l) = (β_after(l) − D) ∪ U` and `β_before(l') ⊇ β_after(l)`.
pub fn check_prediction_lemma_reverse<T: Ord + Clone>(
    before: &BTreeSet<T>,
    _after: &BTreeSet<T>,
    before_succ: &BTreeSet<T>,
    _defs: &BTreeSet<T>,
    uses: &BTreeSet<T>,
) -> bool {
    let required: BTreeSet<T> = before.difference(uses).cloned().collect();
    before_succ.is_superset(&required)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaForm {
    /// `β_before(l) = (β_after(l) ∧ D̄) ∨ U`; concludes `β_before(l') ≤ β_before(l) ∨ D`.
    And,
    /// `β_before(l) = (β_after(l) ∨ D̄) ∧ U`; concludes `β_before(l') ≤ β_before(l) ∨ Ū`.
    Or,
}

/// Prediction consistency over a complemented distributive lattice.
pub fn check_prediction_lemma_cd<T: Element>(
    form: LemmaForm,
    before: &Fact<T>,
    _after: &Fact<T>,
    before_succ: &Fact<T>,
    defs: &Fact<T>,
    uses: &Fact<T>,
) -> Result<bool, LatticeError> {
    let bound = match form {
        LemmaForm::And => before.join(defs)?,
        LemmaForm::Or => before.join(&uses.complement())?,
    };
    before_succ.leq(&bound)
}

/// The degenerate `D = U = ∅` case: from `β_before(l) = β_after(l)` and
/// `β_after(l) = β_before(l')`, both `β_before(l) = β_before(l')` and
/// `β_before(l') ≤ β_before(l)` follow.
pub fn check_equality_lemma<T: Element>(
    before: &Fact<T>,
    _after: &Fact<T>,
    before_succ: &Fact<T>,
) -> Result<bool, LatticeError> {
    Ok(before == before_succ && before_succ.leq(before)?)
}
