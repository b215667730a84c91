//! Beam search over an autoregressive token scorer.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Incremental next-token log-probabilities. Token ids range over
/// `0..=eos()`; `eos()` ends a hypothesis.
pub trait SequenceScorer {
    type State: Clone;

    /// State after the start symbol and the log-probabilities of the first token.
    fn start(&self) -> (Self::State, Vec<f64>);

    /// State after consuming `token` and the log-probabilities of the next one.
    fn advance(&self, state: &Self::State, token: usize) -> (Self::State, Vec<f64>);

    fn eos(&self) -> usize;
}

/// A finished hypothesis. `tokens` excludes the end symbol; `score` includes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
}

fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

struct Live<S> {
    tokens: Vec<usize>,
    score: f64,
    state: S,
    next: Vec<f64>,
}

/// Beam search with at most `max_len` tokens before the forced end symbol.
///
/// At every step the `beam_size` best one-token extensions (end symbol
/// included) survive; extensions ending in the end symbol are finished.
/// The search stops once the best finished score is at least the best live
/// score, which is exact because log-probabilities are non-positive.
/// Returns finished hypotheses, best first; ties go to the lexicographically
/// smaller token sequence.
pub fn beam_search<S: SequenceScorer>(scorer: &S, beam_size: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if beam_size == 0 {
        return Err(Error::Decode("beam size must be at least 1".into()));
    }
    let eos = scorer.eos();
    let (state, next) = scorer.start();
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        state,
        next,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..=max_len {
        let mut candidates: Vec<(f64, Vec<usize>, usize)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            for (tok, &lp) in hyp.next.iter().enumerate() {
                if step == max_len && tok != eos {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                candidates.push((hyp.score + lp, tokens, h));
            }
        }
        candidates.sort_by(|a, b| rank(a.0, &a.1, b.0, &b.1));
        candidates.truncate(beam_size);

        let mut next_live = Vec::new();
        for (score, mut tokens, parent) in candidates {
            let tok = *tokens.last().expect("extension has a token");
            if tok == eos {
                tokens.pop();
                finished.push(Hypothesis { tokens, score });
            } else {
                let (state, next) = scorer.advance(&live[parent].state, tok);
                next_live.push(Live {
                    tokens,
                    score,
                    state,
                    next,
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        let best_live = live.iter().map(|l| l.score).fold(f64::NEG_INFINITY, f64::max);
        let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if best_done >= best_live {
            break;
        }
    }
    if finished.is_empty() {
        return Err(Error::Decode("beam search finished no hypothesis".into()));
    }
    finished.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
    Ok(finished)
}

/// Repeatedly takes the most likely next token (lowest id on ties).
pub fn greedy_search<S: SequenceScorer>(scorer: &S, max_len: usize) -> Hypothesis {
    let eos = scorer.eos();
    let (mut state, mut next) = scorer.start();
    let mut tokens = Vec::new();
    let mut score = 0.0;
    loop {
        let tok = if tokens.len() == max_len {
            eos
        } else {
            let mut best = 0;
            for (i, lp) in next.iter().enumerate() {
                if *lp > next[best] {
                    best = i;
                }
            }
            best
        };
        score += next[tok];
        if tok == eos {
            return Hypothesis { tokens, score };
        }
        tokens.push(tok);
        let (s, n) = scorer.advance(&state, tok);
        state = s;
        next = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Next-token distribution depends on (previous token, position).
    struct TableScorer {
        vocab: usize,
        table: Vec<Vec<f64>>,
    }

    impl TableScorer {
        fn new(vocab: usize, seed: u64) -> Self {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let table = (0..(vocab + 1) * 8)
                .map(|_| {
                    let logits: Vec<f64> = (0..=vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let lse = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
                    logits.iter().map(|v| v - lse).collect()
                })
                .collect();
            TableScorer { vocab, table }
        }

        fn row(&self, prev: usize, pos: usize) -> Vec<f64> {
            self.table[(pos % 8) * (self.vocab + 1) + prev].clone()
        }
    }

    impl SequenceScorer for TableScorer {
        type State = (usize, usize);

        fn start(&self) -> (Self::State, Vec<f64>) {
            ((self.vocab, 0), self.row(self.vocab, 0))
        }

        fn advance(&self, s: &Self::State, token: usize) -> (Self::State, Vec<f64>) {
            ((token, s.1 + 1), self.row(token, s.1 + 1))
        }

        fn eos(&self) -> usize {
            self.vocab
        }
    }

    fn exhaustive(s: &TableScorer, max_len: usize) -> Hypothesis {
        let mut best = Hypothesis {
            tokens: vec![],
            score: f64::NEG_INFINITY,
        };
        let mut stack = vec![(Vec::<usize>::new(), s.start())];
        while let Some((tokens, (state, next))) = stack.pop() {
            let done = next[s.eos()] + score_of(s, &tokens);
            if rank(done, &tokens, best.score, &best.tokens) == Ordering::Less {
                best = Hypothesis {
                    tokens: tokens.clone(),
                    score: done,
                };
            }
            if tokens.len() < max_len {
                for t in 0..s.vocab {
                    let mut nt = tokens.clone();
                    nt.push(t);
                    stack.push((nt, s.advance(&state, t)));
                }
            }
        }
        best
    }

    fn score_of(s: &TableScorer, tokens: &[usize]) -> f64 {
        let (mut state, mut next) = s.start();
        let mut total = 0.0;
        for &t in tokens {
            total += next[t];
            (state, next) = s.advance(&state, t);
        }
        total
    }

    #[test]
    fn width_one_is_greedy() {
        for seed in 0..50 {
            let s = TableScorer::new(4, seed);
            let beam = beam_search(&s, 1, 6).unwrap();
            let greedy = greedy_search(&s, 6);
            assert_eq!(beam[0].tokens, greedy.tokens, "seed {seed}");
            assert_eq!(beam[0].score, greedy.score);
        }
    }

    #[test]
    fn wide_beam_is_exhaustive() {
        for seed in 0..30 {
            let s = TableScorer::new(3, seed);
            let beam = beam_search(&s, 3usize.pow(4), 4).unwrap();
            let best = exhaustive(&s, 4);
            assert_eq!(beam[0].tokens, best.tokens, "seed {seed}");
            assert!((beam[0].score - best.score).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_limit_forces_end() {
        let s = TableScorer::new(3, 1);
        let hyps = beam_search(&s, 5, 0).unwrap();
        assert_eq!(hyps.len(), 1);
        assert!(hyps[0].tokens.is_empty());
    }

    #[test]
    fn zero_beam_rejected() {
        assert!(beam_search(&TableScorer::new(2, 0), 0, 3).is_err());
    }
}
