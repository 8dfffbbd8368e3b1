//! Definite propositional Horn logic.
//!
//! Entailment is decided by forward chaining to the least model, which is
//! linear in the size of the theory. The logic has no negation, so
//! entailment is monotone under adding clauses.
//!
//! # Text format
//!
//! One item per line; `#` starts a comment that runs to the end of the line.
//!
//! ```text
//! p q -> r      # clause: body atoms, arrow, head
//! -> p          # fact (empty body)
//! ? r           # goal: conjunction of atoms
//! ```
//!
//! Atoms match `[A-Za-z_][A-Za-z0-9_'.]*`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admissibility::{Certificate, Failure, FailureReason};
use crate::error::{Error, Result};
use crate::system::Cost;

/// Cost assigned to entailment-preserving transitions.
pub const FINITE_SYMBOLIC_COST: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Atom(String);

impl Atom {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if is_atom_name(&name) {
            Ok(Self(name))
        } else {
            Err(Error::InvalidInput(format!("`{name}` is not a valid atom name")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_atom_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '\'' | '.'))
}

impl TryFrom<String> for Atom {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Atom::new(s)
    }
}

impl From<Atom> for String {
    fn from(a: Atom) -> Self {
        a.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HornClause {
    pub body: BTreeSet<Atom>,
    pub head: Atom,
}

impl HornClause {
    pub fn fact(head: Atom) -> Self {
        Self {
            body: BTreeSet::new(),
            head,
        }
    }

    pub fn rule(body: impl IntoIterator<Item = Atom>, head: Atom) -> Self {
        Self {
            body: body.into_iter().collect(),
            head,
        }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().chain(std::iter::once(&self.head))
    }
}

impl fmt::Display for HornClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.body {
            write!(f, "{a} ")?;
        }
        write!(f, "-> {}", self.head)
    }
}

/// A finite set of definite clauses. Serializes as clause-format text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Theory {
    clauses: BTreeSet<HornClause>,
}

impl Theory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = HornClause>) -> Self {
        Self {
            clauses: clauses.into_iter().collect(),
        }
    }

    pub fn clauses(&self) -> impl Iterator<Item = &HornClause> {
        self.clauses.iter()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn insert(&mut self, clause: HornClause) -> bool {
        self.clauses.insert(clause)
    }

    pub fn contains(&self, clause: &HornClause) -> bool {
        self.clauses.contains(clause)
    }

    pub fn is_subset(&self, other: &Theory) -> bool {
        self.clauses.is_subset(&other.clauses)
    }

    pub fn union(&self, other: &Theory) -> Theory {
        Theory {
            clauses: self.clauses.union(&other.clauses).cloned().collect(),
        }
    }

    /// Every atom occurring in a body or head.
    pub fn vocabulary(&self) -> BTreeSet<Atom> {
        self.clauses.iter().flat_map(|c| c.atoms().cloned()).collect()
    }

    pub fn rename(&self, sigma: &Rename) -> Theory {
        Theory::from_clauses(self.clauses.iter().map(|c| HornClause {
            body: c.body.iter().map(|a| sigma.apply(a)).collect(),
            head: sigma.apply(&c.head),
        }))
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Theory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let file = TheoryFile::parse(s)?;
        if let Some(line) = file.goal_lines.first() {
            return Err(Error::Parse {
                line: *line,
                message: "goal lines are not allowed in a bare theory".into(),
            });
        }
        Ok(file.theory)
    }
}

impl TryFrom<String> for Theory {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Theory> for String {
    fn from(t: Theory) -> Self {
        t.to_string()
    }
}

/// Nonempty conjunction of atoms. Serializes as space-separated atom names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Goal {
    atoms: BTreeSet<Atom>,
}

impl Goal {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self> {
        let atoms: BTreeSet<Atom> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidInput("a goal needs at least one atom".into()));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &BTreeSet<Atom> {
        &self.atoms
    }

    pub fn rename(&self, sigma: &Rename) -> Goal {
        Goal {
            atoms: self.atoms.iter().map(|a| sigma.apply(a)).collect(),
        }
    }

    /// The goal's atoms as a theory of facts.
    pub fn as_facts(&self) -> Theory {
        Theory::from_clauses(self.atoms.iter().cloned().map(HornClause::fact))
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.atoms.iter().map(Atom::as_str).collect();
        f.write_str(&names.join(" "))
    }
}

impl FromStr for Goal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let atoms = s.split_whitespace().map(Atom::new).collect::<Result<Vec<_>>>()?;
        Goal::new(atoms)
    }
}

impl TryFrom<String> for Goal {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Goal> for String {
    fn from(g: Goal) -> Self {
        g.to_string()
    }
}

/// A theory together with the goals listed in the same file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TheoryFile {
    pub theory: Theory,
    pub goals: Vec<Goal>,
    goal_lines: Vec<usize>,
}

impl TheoryFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = TheoryFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            if let Some(rest) = line.strip_prefix('?') {
                let goal: Goal = rest.parse().map_err(|e: Error| err(e.to_string()))?;
                out.goals.push(goal);
                out.goal_lines.push(line_no);
                continue;
            }
            let (body, head) = line
                .split_once("->")
                .ok_or_else(|| err("expected `->` in clause".into()))?;
            let mut heads = head.split_whitespace();
            let head = match (heads.next(), heads.next()) {
                (Some(h), None) => Atom::new(h).map_err(|e| err(e.to_string()))?,
                (None, _) => return Err(err("clause has no head".into())),
                (Some(_), Some(_)) => return Err(err("clause has more than one head".into())),
            };
            let body = body
                .split_whitespace()
                .map(|a| Atom::new(a).map_err(|e| err(e.to_string())))
                .collect::<Result<BTreeSet<_>>>()?;
            out.theory.insert(HornClause { body, head });
        }
        Ok(out)
    }
}

/// Atom renaming; atoms without an entry map to themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rename(pub BTreeMap<Atom, Atom>);

impl Rename {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn apply(&self, a: &Atom) -> Atom {
        self.0.get(a).cloned().unwrap_or_else(|| a.clone())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(k, v)| k == v)
    }

    /// `other ∘ self`: apply `self` first.
    pub fn then(&self, other: &Rename) -> Rename {
        let mut map: BTreeMap<Atom, Atom> = self.0.iter().map(|(k, v)| (k.clone(), other.apply(v))).collect();
        for (k, v) in &other.0 {
            map.entry(k.clone()).or_insert_with(|| v.clone());
        }
        Rename(map)
    }

    /// Fails if two distinct atoms of `domain` share an image.
    pub fn check_injective<'a>(&self, domain: impl IntoIterator<Item = &'a Atom>) -> Result<()> {
        let mut seen: HashMap<Atom, &Atom> = HashMap::new();
        for a in domain {
            let img = self.apply(a);
            if let Some(prev) = seen.get(&img) {
                if *prev != a {
                    return Err(Error::NonInjectiveRename(
                        prev.to_string(),
                        a.to_string(),
                        img.to_string(),
                    ));
                }
            } else {
                seen.insert(img, a);
            }
        }
        Ok(())
    }
}

/// One derived atom and the clause that fired it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub atom: Atom,
    pub clause: HornClause,
}

/// Least model of a definite theory, in derivation order.
pub fn least_model_trace(theory: &Theory) -> Vec<Derivation> {
    let clauses: Vec<&HornClause> = theory.clauses().collect();
    let mut remaining: Vec<usize> = clauses.iter().map(|c| c.body.len()).collect();
    let mut watchers: HashMap<&Atom, Vec<usize>> = HashMap::new();
    for (i, c) in clauses.iter().enumerate() {
        for a in &c.body {
            watchers.entry(a).or_default().push(i);
        }
    }

    let mut derived: BTreeSet<&Atom> = BTreeSet::new();
    let mut trace = Vec::new();
    let mut queue: VecDeque<usize> = (0..clauses.len()).filter(|&i| remaining[i] == 0).collect();
    while let Some(i) = queue.pop_front() {
        let head = &clauses[i].head;
        if !derived.insert(head) {
            continue;
        }
        trace.push(Derivation {
            atom: head.clone(),
            clause: clauses[i].clone(),
        });
        if let Some(ws) = watchers.get(head) {
            for &j in ws {
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
    }
    trace
}

pub fn least_model(theory: &Theory) -> BTreeSet<Atom> {
    least_model_trace(theory).into_iter().map(|d| d.atom).collect()
}

/// `theory ⊨ goal` for definite programs.
pub fn entails(theory: &Theory, goal: &Goal) -> bool {
    let model = least_model(theory);
    goal.atoms().iter().all(|a| model.contains(a))
}

/// Gate for a symbolic regime transition: the renamed hypothesis together
/// with the target background must still entail the renamed goal.
pub fn certify_symbolic(
    hypothesis: &Theory,
    background_src: &Theory,
    background_dst: &Theory,
    sigma: &Rename,
    goal: &Goal,
) -> Result<Certificate> {
    let domain: BTreeSet<Atom> = hypothesis
        .vocabulary()
        .into_iter()
        .chain(goal.atoms().iter().cloned())
        .collect();
    sigma.check_injective(&domain)?;

    let transported = hypothesis.rename(sigma).union(background_dst);
    let target_goal = goal.rename(sigma);
    if entails(&transported, &target_goal) {
        return Ok(Certificate::admitted(Cost::Finite(FINITE_SYMBOLIC_COST)));
    }
    let held_before = entails(&hypothesis.union(background_src), goal);
    let detail = if held_before {
        format!("entailment of `{target_goal}` lost under the updated background")
    } else {
        format!("`{target_goal}` is not entailed (it was not entailed at the source either)")
    };
    Ok(Certificate::rejected(vec![Failure::new(
        FailureReason::ProtectedViolated,
        detail,
    )]))
}

/// Fresh-head criterion: every added clause concludes an atom that does
/// not occur anywhere in `base`.
pub fn conservative_extension_check(base: &Theory, extended: &Theory) -> Result<bool> {
    if let Some(missing) = base.clauses().find(|c| !extended.contains(c)) {
        return Err(Error::NotASuperset(missing.to_string()));
    }
    let vocab = base.vocabulary();
    Ok(extended
        .clauses()
        .filter(|c| !base.contains(c))
        .all(|c| !vocab.contains(&c.head)))
}

/// Runtime assertion of monotone entailment: false only if adding
/// `extra` retracts an entailed goal.
pub fn monotonicity_check(theory: &Theory, extra: &Theory, goal: &Goal) -> bool {
    !(entails(theory, goal) && !entails(&theory.union(extra), goal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(s: &str) -> Atom {
        Atom::new(s).unwrap()
    }

    fn theory(s: &str) -> Theory {
        s.parse().unwrap()
    }

    fn goal(s: &str) -> Goal {
        s.parse().unwrap()
    }

    #[test]
    fn modus_ponens() {
        assert!(entails(&theory("-> p\np -> q"), &goal("q")));
    }

    #[test]
    fn empty_theory_entails_nothing() {
        assert!(!entails(&Theory::new(), &goal("q")));
    }

    #[test]
    fn chained_rules() {
        assert!(entails(&theory("-> p\np -> q\nq -> r"), &goal("r")));
        assert!(!entails(&theory("-> p\nq -> r"), &goal("r")));
    }

    #[test]
    fn conjunctive_body_needs_every_atom() {
        let t = theory("-> a\na b -> c");
        assert!(!entails(&t, &goal("c")));
        assert!(entails(&t.union(&theory("-> b")), &goal("c")));
    }

    #[test]
    fn trace_records_firing_clauses() {
        let trace = least_model_trace(&theory("-> p\np -> q"));
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[1].atom, atom("q"));
        assert_eq!(trace[1].clause.to_string(), "p -> q");
    }

    #[test]
    fn parse_file_with_goals_and_comments() {
        let f = TheoryFile::parse("# header\n-> p   # a fact\np -> q\n\n? q p\n").unwrap();
        assert_eq!(f.theory.len(), 2);
        assert_eq!(f.goals, vec![goal("p q")]);
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(
            TheoryFile::parse("-> p\np q\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            TheoryFile::parse("p -> q r"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(TheoryFile::parse("p ->"), Err(Error::Parse { line: 1, .. })));
        assert!("? q".parse::<Theory>().is_err());
    }

    #[test]
    fn symbolic_fresh_extension_is_admissible() {
        let h = theory("-> p");
        let b_src = theory("p -> q");
        let b_dst = b_src.union(&theory("r -> s"));
        let cert = certify_symbolic(&h, &b_src, &b_dst, &Rename::identity(), &goal("q")).unwrap();
        assert!(cert.admissible);
        assert_eq!(cert.cost, Cost::Finite(FINITE_SYMBOLIC_COST));
    }

    #[test]
    fn symbolic_dropping_rule_is_inadmissible() {
        let h = theory("-> p");
        let b_src = theory("p -> q");
        let cert = certify_symbolic(&h, &b_src, &Theory::new(), &Rename::identity(), &goal("q")).unwrap();
        assert!(!cert.admissible);
        assert_eq!(cert.cost, Cost::Infinite);
        assert_eq!(cert.reasons[0].clause, FailureReason::ProtectedViolated);
    }

    #[test]
    fn symbolic_consistent_rename() {
        let h = theory("-> p");
        let b_src = theory("p -> q");
        let b_dst = theory("p' -> q");
        let sigma = Rename([(atom("p"), atom("p'"))].into_iter().collect());
        let cert = certify_symbolic(&h, &b_src, &b_dst, &sigma, &goal("q")).unwrap();
        assert!(cert.admissible);
    }

    #[test]
    fn non_injective_rename_rejected() {
        let h = theory("-> p\n-> q");
        let sigma = Rename([(atom("p"), atom("q"))].into_iter().collect());
        assert!(matches!(
            certify_symbolic(&h, &Theory::new(), &Theory::new(), &sigma, &goal("q")),
            Err(Error::NonInjectiveRename(..))
        ));
    }

    #[test]
    fn conservative_extension_cases() {
        let b = theory("p -> q");
        assert!(conservative_extension_check(&b, &b.union(&theory("r -> s"))).unwrap());
        assert!(!conservative_extension_check(&b, &b.union(&theory("r -> q"))).unwrap());
        assert!(conservative_extension_check(&b, &b).unwrap());
        assert!(matches!(
            conservative_extension_check(&b, &theory("r -> s")),
            Err(Error::NotASuperset(_))
        ));
    }

    #[test]
    fn monotonicity_cases() {
        let t = theory("-> p\np -> q");
        assert!(monotonicity_check(&t, &theory("-> z"), &goal("q")));
        assert!(monotonicity_check(&theory("p -> q"), &theory("-> p"), &goal("q")));
    }

    #[test]
    fn rename_composition() {
        let s1 = Rename([(atom("a"), atom("b"))].into_iter().collect());
        let s2 = Rename([(atom("b"), atom("c")), (atom("x"), atom("y"))].into_iter().collect());
        let both = s1.then(&s2);
        for a in ["a", "b", "x", "z"] {
            assert_eq!(both.apply(&atom(a)), s2.apply(&s1.apply(&atom(a))));
        }
    }

    #[test]
    fn theory_serde_as_text() {
        let t = theory("-> p\np q -> r");
        let json = serde_json::to_string(&t).unwrap();
        let back: Theory = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }
}
