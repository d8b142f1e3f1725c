use serde::{Deserialize, Serialize};

/// One step of an alignment, as indices into the reference and hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum EditOp {
    Match { r: usize, h: usize },
    Sub { r: usize, h: usize },
    Del { r: usize },
    Ins { h: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub distance: usize,
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn count(&self, pred: impl Fn(&EditOp) -> bool) -> usize {
        self.ops.iter().filter(|o| pred(o)).count()
    }
}

/// Levenshtein alignment with unit costs.
///
/// Among minimal scripts the backtrace prefers, at each step from the end,
/// match, then substitution, then deletion, then insertion.
pub fn edit_align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let up = d[(i - 1) * w + j] + 1;
            let left = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = d[(i - 1) * w + j - 1];
            if same && diag == cur {
                ops.push(EditOp::Match { r: i - 1, h: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == cur {
                ops.push(EditOp::Sub { r: i - 1, h: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == cur {
            ops.push(EditOp::Del { r: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Ins { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        distance: d[n * w + m],
        ops,
    }
}

/// Edit distance only, in O(min) memory.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, x) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical() {
        let a = edit_align(&["a", "b", "c"], &["a", "b", "c"]);
        assert_eq!(a.distance, 0);
        assert!(a.ops.iter().all(|o| matches!(o, EditOp::Match { .. })));
    }

    #[test]
    fn one_substitution() {
        let a = edit_align(&["a", "b", "c", "d"], &["a", "b", "x", "d"]);
        assert_eq!(a.distance, 1);
        assert_eq!(a.ops[2], EditOp::Sub { r: 2, h: 2 });
    }

    #[test]
    fn empty_sides() {
        let a = edit_align::<u8>(&[], &[1, 2]);
        assert_eq!(a.distance, 2);
        assert_eq!(a.ops, vec![EditOp::Ins { h: 0 }, EditOp::Ins { h: 1 }]);
        assert_eq!(edit_align::<u8>(&[1], &[]).ops, vec![EditOp::Del { r: 0 }]);
    }

    proptest! {
        #[test]
        fn ops_consistent(a in prop::collection::vec(0u8..3, 0..8), b in prop::collection::vec(0u8..3, 0..8)) {
            let al = edit_align(&a, &b);
            let cost = al.count(|o| !matches!(o, EditOp::Match { .. }));
            prop_assert_eq!(cost, al.distance);
            prop_assert_eq!(al.count(|o| !matches!(o, EditOp::Ins { .. })), a.len());
            prop_assert_eq!(al.count(|o| !matches!(o, EditOp::Del { .. })), b.len());
            prop_assert_eq!(edit_distance(&a, &b), al.distance);
            prop_assert_eq!(edit_distance(&b, &a), al.distance);
        }
    }
}
