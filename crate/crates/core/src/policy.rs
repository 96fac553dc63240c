//! Endorsement policies: boolean expressions over organizations.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EndorsementPolicy {
    /// Satisfied when the organization has a verified endorsement.
    SignedBy(String),
    And(Vec<EndorsementPolicy>),
    Or(Vec<EndorsementPolicy>),
    /// At least `m` of the children.
    OutOf(usize, Vec<EndorsementPolicy>),
}

impl EndorsementPolicy {
    pub fn signed_by(org: impl Into<String>) -> Self {
        EndorsementPolicy::SignedBy(org.into())
    }

    /// One signature from each of `orgs`.
    pub fn all_of<S: AsRef<str>>(orgs: &[S]) -> Self {
        EndorsementPolicy::And(orgs.iter().map(|o| Self::signed_by(o.as_ref())).collect())
    }

    /// A signature from any of `orgs`.
    pub fn any_of<S: AsRef<str>>(orgs: &[S]) -> Self {
        EndorsementPolicy::Or(orgs.iter().map(|o| Self::signed_by(o.as_ref())).collect())
    }

    pub fn out_of(m: usize, children: Vec<EndorsementPolicy>) -> Result<Self> {
        let p = EndorsementPolicy::OutOf(m, children);
        p.check()?;
        Ok(p)
    }

    /// Checks the structural invariants: `m <= children` for every OUTOF.
    pub fn check(&self) -> Result<()> {
        match self {
            EndorsementPolicy::SignedBy(org) if org.is_empty() => {
                Err(Error::Protocol("policy principal is empty".into()))
            }
            EndorsementPolicy::SignedBy(_) => Ok(()),
            EndorsementPolicy::And(c) | EndorsementPolicy::Or(c) => {
                c.iter().try_for_each(EndorsementPolicy::check)
            }
            EndorsementPolicy::OutOf(m, c) => {
                if *m > c.len() {
                    return Err(Error::Protocol(format!(
                        "OUTOF({m}) over {} children",
                        c.len()
                    )));
                }
                c.iter().try_for_each(EndorsementPolicy::check)
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            EndorsementPolicy::SignedBy(_) => 1,
            EndorsementPolicy::And(c) | EndorsementPolicy::Or(c) | EndorsementPolicy::OutOf(_, c) => {
                1 + c.iter().map(EndorsementPolicy::depth).max().unwrap_or(0)
            }
        }
    }

    /// Every organization named by a leaf.
    pub fn principals(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_principals(&mut out);
        out
    }

    fn collect_principals<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            EndorsementPolicy::SignedBy(org) => {
                out.insert(org);
            }
            EndorsementPolicy::And(c) | EndorsementPolicy::Or(c) | EndorsementPolicy::OutOf(_, c) => {
                c.iter().for_each(|p| p.collect_principals(out))
            }
        }
    }

    pub fn evaluate<S: AsRef<str> + Ord>(&self, satisfied: &BTreeSet<S>) -> bool {
        eval_policy(self, &|org| satisfied.iter().any(|s| s.as_ref() == org))
    }
}

/// Recursive evaluation against a membership predicate over org ids.
pub fn eval_policy(policy: &EndorsementPolicy, has: &dyn Fn(&str) -> bool) -> bool {
    match policy {
        EndorsementPolicy::SignedBy(org) => has(org),
        EndorsementPolicy::And(c) => c.iter().all(|p| eval_policy(p, has)),
        EndorsementPolicy::Or(c) => c.iter().any(|p| eval_policy(p, has)),
        EndorsementPolicy::OutOf(m, c) => {
            let mut hits = 0;
            for p in c {
                if hits >= *m {
                    break;
                }
                if eval_policy(p, has) {
                    hits += 1;
                }
            }
            hits >= *m
        }
    }
}

impl fmt::Display for EndorsementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, c: &[EndorsementPolicy]| -> fmt::Result {
            for (i, p) in c.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p}")?;
            }
            Ok(())
        };
        match self {
            EndorsementPolicy::SignedBy(org) => f.write_str(org),
            EndorsementPolicy::And(c) => {
                f.write_str("AND(")?;
                list(f, c)?;
                f.write_str(")")
            }
            EndorsementPolicy::Or(c) => {
                f.write_str("OR(")?;
                list(f, c)?;
                f.write_str(")")
            }
            EndorsementPolicy::OutOf(m, c) => {
                write!(f, "OUTOF({m}, ")?;
                list(f, c)?;
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(orgs: &[&'static str]) -> BTreeSet<&'static str> {
        orgs.iter().copied().collect()
    }

    #[test]
    fn or_with_one_member() {
        let p = EndorsementPolicy::any_of(&["A", "B"]);
        assert!(p.evaluate(&set(&["B"])));
    }

    #[test]
    fn empty_set_fails_and_and_leaf() {
        let empty = set(&[]);
        assert!(!EndorsementPolicy::all_of(&["A", "B"]).evaluate(&empty));
        assert!(!EndorsementPolicy::signed_by("A").evaluate(&empty));
    }

    #[test]
    fn out_of_two_with_a_and_c() {
        let p = EndorsementPolicy::out_of(
            2,
            vec![
                EndorsementPolicy::signed_by("A"),
                EndorsementPolicy::signed_by("B"),
                EndorsementPolicy::signed_by("C"),
            ],
        )
        .unwrap();
        assert!(p.evaluate(&set(&["A", "C"])));
        assert!(!p.evaluate(&set(&["B"])));
    }

    #[test]
    fn out_of_rejects_threshold_above_child_count() {
        assert!(EndorsementPolicy::out_of(3, vec![EndorsementPolicy::signed_by("A")]).is_err());
        assert!(EndorsementPolicy::out_of(0, vec![]).unwrap().evaluate(&set(&[])));
    }

    #[test]
    fn depth_and_principals() {
        let p = EndorsementPolicy::And(vec![
            EndorsementPolicy::any_of(&["A", "B"]),
            EndorsementPolicy::signed_by("C"),
        ]);
        assert_eq!(p.depth(), 3);
        assert_eq!(p.principals().into_iter().collect::<Vec<_>>(), vec!["A", "B", "C"]);
        assert_eq!(p.to_string(), "AND(OR(A, B), C)");
    }
}
