//! Server-sent event feed: backlog from a sequence number, then live tail.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use futures::Stream;
use mci_core::{Event, EventKind};
use tokio::sync::broadcast::{error::RecvError, Receiver};

use crate::SessionHandle;

struct Feed {
    handle: Arc<SessionHandle>,
    rx: Receiver<Event>,
    pending: VecDeque<Event>,
    next: u64,
    done: bool,
}

impl Feed {
    /// Refills from the log; covers lagged receivers and out-of-order wakeups.
    async fn resync(&mut self) {
        let s = self.handle.session.lock().await;
        self.pending.extend(s.events_from(self.next).iter().cloned());
    }

    async fn next_event(&mut self) -> Option<Event> {
        loop {
            if let Some(e) = self.pending.pop_front() {
                if e.seq < self.next {
                    continue;
                }
                self.next = e.seq + 1;
                return Some(e);
            }
            if self.done {
                return None;
            }
            match self.rx.recv().await {
                Ok(e) if e.seq == self.next => self.pending.push_back(e),
                Ok(e) if e.seq < self.next => {}
                Ok(_) | Err(RecvError::Lagged(_)) => self.resync().await,
                Err(RecvError::Closed) => {
                    self.resync().await;
                    self.done = true;
                }
            }
        }
    }
}

fn to_sse(e: &Event) -> SseEvent {
    SseEvent::default().event(e.kind.name()).id(e.seq.to_string()).data(e.to_json_line())
}

/// Ordered events starting at `from`. Closes after `session_ended`.
pub(crate) fn events(handle: Arc<SessionHandle>, rx: Receiver<Event>, backlog: Vec<Event>, from: u64) -> impl Stream<Item = Event> {
    let feed = Feed { handle, rx, pending: backlog.into(), next: from, done: false };
    futures::stream::unfold(Some(feed), |feed| async move {
        let mut feed = feed?;
        let e = feed.next_event().await?;
        let ended = matches!(e.kind, EventKind::SessionEnded { .. });
        Some((e, (!ended).then_some(feed)))
    })
}

pub(crate) async fn sse(handle: Arc<SessionHandle>, from: u64) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    // Backlog and subscription are taken under one lock so nothing falls between them.
    let (rx, backlog) = {
        let s = handle.session.lock().await;
        (s.subscribe(), s.events_from(from).to_vec())
    };
    let stream = futures::StreamExt::map(events(handle, rx, backlog, from), |e| Ok(to_sse(&e)));
    Sse::new(stream).keep_alive(KeepAlive::default())
}
