//! The process automaton interface and the halting wrapper.
//!
//! Automata are deterministic: the next state and the at-most-one outgoing
//! message are functions of (state, received message, oracle answer). Whether
//! a state consults an oracle, and with which value, depends on the state
//! alone; the engine supplies an answer to `transition` exactly when
//! [`Automaton::query`] is `Some` for the starting state.

use std::collections::VecDeque;
use std::fmt;

use crate::oracle::SanctuaryId;
use crate::runtime::{Message, MsgBody};
use crate::task::{ProcessId, Value};

/// A pending oracle consultation demanded by a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub sanctuary: SanctuaryId,
    pub value: Value,
}

/// Result of one step: successor state plus at most one outgoing message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition<S> {
    pub next: S,
    pub send: Option<Message>,
}

impl<S> Transition<S> {
    pub fn stay(next: S) -> Self {
        Transition { next, send: None }
    }

    pub fn send(next: S, m: Message) -> Self {
        Transition {
            next,
            send: Some(m),
        }
    }
}

/// One process's program.
pub trait Automaton: Clone {
    type State: Clone + Eq + fmt::Debug;

    /// Starting state for input value `v`.
    fn initial(&self, v: Value) -> Self::State;

    /// The consultation this state performs, if any. Must depend on the state
    /// alone.
    fn query(&self, s: &Self::State) -> Option<QuerySpec>;

    /// Deterministic step function. `m` is the message received this step (if
    /// the step has a receipt), `d` the oracle's answer (present exactly when
    /// [`Automaton::query`] is `Some` for `s`).
    fn transition(&self, s: &Self::State, m: Option<&MsgBody>, d: Option<Value>) -> Transition<Self::State>;

    /// The decision this state carries, if the process has decided.
    fn decision(&self, s: &Self::State) -> Option<Value>;

    /// Whether `s` is a halting state: only a self-loop that receives
    /// anything and sends nothing.
    fn is_halted(&self, s: &Self::State) -> bool;
}

/// State of a halting-wrapped process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HaltState<S> {
    /// Running the inner automaton.
    Running(S),
    /// Decided; notifying the remaining peers one message per step.
    Notifying {
        decision: Value,
        remaining: VecDeque<ProcessId>,
    },
    /// Done: self-loop, sends nothing.
    Halted { decision: Value },
}

/// Wraps an automaton so that processes stop after deciding: the first
/// decision triggers one halt notification to every peer, then a final pure
/// step into a halting state. A process receiving a halt notification decides
/// that value and goes through the same notify-then-halt tail. Notifying and
/// halted states absorb (and ignore) any delivered message.
#[derive(Debug, Clone)]
pub struct WithHalting<A> {
    inner: A,
    peers: Vec<ProcessId>,
}

impl<A> WithHalting<A> {
    /// `peers`: everyone to notify (the other processes of the run).
    pub fn new(inner: A, peers: Vec<ProcessId>) -> Self {
        WithHalting { inner, peers }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

impl<A: Automaton> Automaton for WithHalting<A> {
    type State = HaltState<A::State>;

    fn initial(&self, v: Value) -> Self::State {
        HaltState::Running(self.inner.initial(v))
    }

    fn query(&self, s: &Self::State) -> Option<QuerySpec> {
        match s {
            HaltState::Running(inner) => self.inner.query(inner),
            _ => None,
        }
    }

    fn transition(
        &self,
        s: &Self::State,
        m: Option<&MsgBody>,
        d: Option<Value>,
    ) -> Transition<Self::State> {
        match s {
            HaltState::Running(inner) => {
                if let Some(MsgBody::Halt { value }) = m {
                    // Adopt the received decision and stop running the inner
                    // automaton.
                    return Transition::stay(HaltState::Notifying {
                        decision: *value,
                        remaining: self.peers.iter().copied().collect(),
                    });
                }
                let tr = self.inner.transition(inner, m, d);
                let newly_decided =
                    self.inner.decision(&tr.next).filter(|_| self.inner.decision(inner).is_none());
                match newly_decided {
                    Some(decision) => Transition {
                        next: HaltState::Notifying {
                            decision,
                            remaining: self.peers.iter().copied().collect(),
                        },
                        send: tr.send,
                    },
                    None => Transition {
                        next: HaltState::Running(tr.next),
                        send: tr.send,
                    },
                }
            }
            HaltState::Notifying {
                decision,
                remaining,
            } => {
                let mut rest = remaining.clone();
                match rest.pop_front() {
                    Some(peer) => Transition::send(
                        HaltState::Notifying {
                            decision: *decision,
                            remaining: rest,
                        },
                        Message {
                            dest: peer,
                            body: MsgBody::Halt { value: *decision },
                        },
                    ),
                    None => Transition::stay(HaltState::Halted {
                        decision: *decision,
                    }),
                }
            }
            HaltState::Halted { .. } => Transition::stay(s.clone()),
        }
    }

    fn decision(&self, s: &Self::State) -> Option<Value> {
        match s {
            HaltState::Running(inner) => self.inner.decision(inner),
            HaltState::Notifying { decision, .. } | HaltState::Halted { decision } => {
                Some(*decision)
            }
        }
    }

    fn is_halted(&self, s: &Self::State) -> bool {
        matches!(s, HaltState::Halted { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{ONE, ZERO};

    /// Decides its input after one internal step; never sends or queries.
    #[derive(Clone, Debug)]
    struct OneShot;

    #[derive(Clone, Debug, PartialEq, Eq)]
    enum OneShotState {
        Fresh(Value),
        Done(Value),
    }

    impl Automaton for OneShot {
        type State = OneShotState;

        fn initial(&self, v: Value) -> OneShotState {
            OneShotState::Fresh(v)
        }

        fn query(&self, _s: &OneShotState) -> Option<QuerySpec> {
            None
        }

        fn transition(
            &self,
            s: &OneShotState,
            _m: Option<&MsgBody>,
            _d: Option<Value>,
        ) -> Transition<OneShotState> {
            match s {
                OneShotState::Fresh(v) => Transition::stay(OneShotState::Done(*v)),
                OneShotState::Done(_) => Transition::stay(s.clone()),
            }
        }

        fn decision(&self, s: &OneShotState) -> Option<Value> {
            match s {
                OneShotState::Fresh(_) => None,
                OneShotState::Done(v) => Some(*v),
            }
        }

        fn is_halted(&self, s: &OneShotState) -> bool {
            matches!(s, OneShotState::Done(_))
        }
    }

    fn pid(n: u32) -> ProcessId {
        ProcessId(n)
    }

    #[test]
    fn wrapper_notifies_each_peer_then_halts() {
        let w = WithHalting::new(OneShot, vec![pid(2), pid(3)]);
        let s0 = w.initial(ONE);
        assert_eq!(w.decision(&s0), None);

        // Inner decision step.
        let t1 = w.transition(&s0, None, None);
        assert_eq!(w.decision(&t1.next), Some(ONE));
        assert!(t1.send.is_none());
        assert!(!w.is_halted(&t1.next));

        // One halt notification per step, peers in order.
        let t2 = w.transition(&t1.next, None, None);
        assert_eq!(
            t2.send,
            Some(Message {
                dest: pid(2),
                body: MsgBody::Halt { value: ONE }
            })
        );
        let t3 = w.transition(&t2.next, None, None);
        assert_eq!(t3.send.as_ref().map(|m| m.dest), Some(pid(3)));

        // Final pure step into the halting state.
        let t4 = w.transition(&t3.next, None, None);
        assert!(t4.send.is_none());
        assert!(w.is_halted(&t4.next));
        assert_eq!(w.decision(&t4.next), Some(ONE));

        // Halting states self-loop and ignore deliveries.
        let drained = w.transition(
            &t4.next,
            Some(&MsgBody::Halt { value: ZERO }),
            None,
        );
        assert_eq!(drained.next, t4.next);
        assert!(drained.send.is_none());
        assert_eq!(w.decision(&drained.next), Some(ONE));
    }

    #[test]
    fn wrapper_adopts_received_halt_notifications() {
        let w = WithHalting::new(OneShot, vec![pid(1)]);
        let s0 = w.initial(ONE);
        let t = w.transition(&s0, Some(&MsgBody::Halt { value: ZERO }), None);
        // The received decision wins over the inner automaton's own pending
        // decision, and gets re-notified to peers.
        assert_eq!(w.decision(&t.next), Some(ZERO));
        let t2 = w.transition(&t.next, None, None);
        assert_eq!(
            t2.send,
            Some(Message {
                dest: pid(1),
                body: MsgBody::Halt { value: ZERO }
            })
        );
    }
}
