use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Outcome of one pool item. `start` and `end` are offsets from pool start.
#[derive(Debug)]
pub struct Completed<R> {
    pub result: std::result::Result<R, String>,
    pub start: Duration,
    pub end: Duration,
    pub worker: usize,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".to_string()
    }
}

/// Runs `job` on every item with at most `workers` threads.
///
/// Results come back in item order whatever the completion order. An error
/// or panic in one item is recorded and never stops the others.
pub fn schedule<T, R, F>(items: &[T], workers: usize, job: F) -> Result<Vec<Completed<R>>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if workers == 0 {
        return Err(Error::invalid("workers must be at least 1"));
    }
    let slots: Vec<Mutex<Option<Completed<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let origin = Instant::now();
    let run_worker = |worker: usize| loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= items.len() {
            break;
        }
        let start = origin.elapsed();
        let result = match panic::catch_unwind(AssertUnwindSafe(|| job(&items[i]))) {
            Ok(Ok(r)) => Ok(r),
            Ok(Err(e)) => Err(e.to_string()),
            Err(p) => Err(panic_message(p)),
        };
        let done = Completed {
            result,
            start,
            end: origin.elapsed(),
            worker,
        };
        *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(done);
    };
    let threads = workers.min(items.len());
    if threads <= 1 {
        run_worker(0);
    } else {
        std::thread::scope(|s| {
            for w in 0..threads {
                let run = &run_worker;
                s.spawn(move || run(w));
            }
        });
    }
    Ok(slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .expect("every slot is filled")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_zero_workers() {
        let none: Vec<u32> = Vec::new();
        assert!(schedule(&none, 3, |x| Ok(*x)).unwrap().is_empty());
        assert!(schedule(&[1], 0, |x: &i32| Ok(*x)).is_err());
    }

    #[test]
    fn failures_are_isolated_and_order_is_kept() {
        let items: Vec<i32> = (0..20).collect();
        let out = schedule(&items, 4, |&x| {
            if x == 7 {
                panic!("seven");
            }
            if x == 9 {
                return Err(Error::invalid("nine"));
            }
            Ok(x * 2)
        })
        .unwrap();
        for (i, c) in out.iter().enumerate() {
            match i {
                7 => assert!(c.result.as_ref().unwrap_err().contains("seven")),
                9 => assert!(c.result.as_ref().unwrap_err().contains("nine")),
                _ => assert_eq!(*c.result.as_ref().unwrap(), 2 * i as i32),
            }
        }
    }
}
