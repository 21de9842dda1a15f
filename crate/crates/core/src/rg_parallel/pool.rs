//! Fixed-size worker pool with per-call local job pools.
//!
//! A task that needs parallel work builds a [`JobPool`] and hands it to
//! [`PoolHandle::run_pool`]. The calling ("primary") task walks its jobs in
//! creation order and, for each one, either claims an idle worker or runs the
//! job itself. Claims never block: a worker is reserved with a single
//! compare-and-swap on the idle counter, and a reserved worker is already
//! parked on the job channel, so a dispatched job starts right away. The
//! primary only waits once every job is either finished or running, which
//! rules out the hold-and-wait cycle a shared global queue produces.
//!
//! Each job writes its result into its own slot, exactly once.

use std::any::Any;
use std::cell::RefCell;
use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use parking_lot::{Condvar, Mutex};
use thiserror::Error;

type Task = Box<dyn FnOnce() + Send + 'static>;
type BoxedJob<T> = Box<dyn FnOnce() -> T + Send + 'static>;

enum Message {
    Run(Task),
    Shutdown,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("job {index} panicked: {message}")]
    JobPanicked { index: usize, message: String },
    #[error("result slot {index} was never written")]
    SlotMissing { index: usize },
}

/// Dispatch behaviour of a [`WorkerPool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolOptions {
    /// Keep the last job of every pool for the primary and run it after the
    /// others have been dispatched or inlined.
    pub hold_primary_job: bool,
    /// While waiting on running jobs, execute not-yet-started jobs of pools
    /// created (transitively) by those jobs.
    pub help_while_waiting: bool,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            hold_primary_job: true,
            help_while_waiting: false,
        }
    }
}

/// Counter snapshot; see [`PoolHandle::stats`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub jobs_dispatched: u64,
    pub jobs_inlined: u64,
    /// Jobs run by an ancestor primary while it was waiting.
    pub jobs_helped: u64,
    /// Most jobs observed running on workers at once.
    pub peak_concurrency: usize,
    /// Time each worker spent parked waiting for a job.
    pub idle_time: Vec<Duration>,
    /// Slot writes that found the slot already filled. Always zero unless a
    /// scheduling bug is present.
    pub slot_violations: u64,
}

struct Counters {
    dispatched: AtomicU64,
    inlined: AtomicU64,
    helped: AtomicU64,
    running: AtomicUsize,
    peak: AtomicUsize,
    idle_nanos: Vec<AtomicU64>,
    slot_violations: AtomicU64,
}

struct Shared {
    workers: usize,
    idle: AtomicUsize,
    sender: Sender<Message>,
    options: PoolOptions,
    counters: Counters,
}

/// Owner of the worker threads. Dropping it stops and joins them.
pub struct WorkerPool {
    handle: PoolHandle,
    threads: Vec<JoinHandle<()>>,
}

/// Cheap cloneable reference used by jobs to create nested pools.
#[derive(Clone)]
pub struct PoolHandle {
    shared: Arc<Shared>,
}

/// Twice the available hardware parallelism.
pub fn default_worker_count() -> usize {
    2 * std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl WorkerPool {
    pub fn new(workers: usize) -> Self {
        Self::with_options(workers, PoolOptions::default())
    }

    pub fn with_options(workers: usize, options: PoolOptions) -> Self {
        let (sender, receiver) = crossbeam_channel::unbounded();
        let shared = Arc::new(Shared {
            workers,
            idle: AtomicUsize::new(0),
            sender,
            options,
            counters: Counters {
                dispatched: AtomicU64::new(0),
                inlined: AtomicU64::new(0),
                helped: AtomicU64::new(0),
                running: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                idle_nanos: (0..workers).map(|_| AtomicU64::new(0)).collect(),
                slot_violations: AtomicU64::new(0),
            },
        });
        let threads = (0..workers)
            .map(|i| {
                let shared = Arc::clone(&shared);
                let rx = receiver.clone();
                std::thread::Builder::new()
                    .name(format!("cpo-worker-{i}"))
                    .spawn(move || worker_loop(i, &shared, &rx))
                    .expect("spawn worker thread")
            })
            .collect();
        Self {
            handle: PoolHandle { shared },
            threads,
        }
    }

    pub fn handle(&self) -> &PoolHandle {
        &self.handle
    }
}

impl std::ops::Deref for WorkerPool {
    type Target = PoolHandle;

    fn deref(&self) -> &PoolHandle {
        &self.handle
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        for _ in 0..self.threads.len() {
            let _ = self.handle.shared.sender.send(Message::Shutdown);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.handle.shared.workers)
            .field("options", &self.handle.shared.options)
            .finish()
    }
}

fn worker_loop(index: usize, shared: &Shared, rx: &Receiver<Message>) {
    let counters = &shared.counters;
    loop {
        // Advertise before parking: every successful claim is matched by a
        // worker that is already (or about to be) blocked in `recv`.
        shared.idle.fetch_add(1, Ordering::SeqCst);
        let parked = Instant::now();
        let msg = rx.recv();
        counters.idle_nanos[index].fetch_add(parked.elapsed().as_nanos() as u64, Ordering::Relaxed);
        match msg {
            Ok(Message::Run(task)) => {
                let now = counters.running.fetch_add(1, Ordering::SeqCst) + 1;
                counters.peak.fetch_max(now, Ordering::SeqCst);
                task();
                counters.running.fetch_sub(1, Ordering::SeqCst);
            }
            Ok(Message::Shutdown) | Err(_) => break,
        }
    }
}

/// Jobs for one local pool, in creation order.
pub struct JobPool<T> {
    jobs: Vec<BoxedJob<T>>,
}

impl<T> Default for JobPool<T> {
    fn default() -> Self {
        Self { jobs: Vec::new() }
    }
}

impl<T: Send + 'static> JobPool<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            jobs: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, job: impl FnOnce() -> T + Send + 'static) {
        self.jobs.push(Box::new(job));
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }
}

/// Write-once result slots plus a completion latch.
struct Slots<T> {
    values: Vec<Mutex<Option<Result<T, String>>>>,
    pending: Mutex<usize>,
    done: Condvar,
}

impl<T> Slots<T> {
    fn new(n: usize) -> Self {
        Self {
            values: (0..n).map(|_| Mutex::new(None)).collect(),
            pending: Mutex::new(n),
            done: Condvar::new(),
        }
    }

    fn fill(&self, index: usize, value: Result<T, String>, counters: &Counters) {
        {
            let mut slot = self.values[index].lock();
            if slot.is_some() {
                counters.slot_violations.fetch_add(1, Ordering::SeqCst);
                return;
            }
            *slot = Some(value);
        }
        let mut pending = self.pending.lock();
        *pending -= 1;
        if *pending == 0 {
            self.done.notify_all();
        }
    }
}

/// Scheduling node of one local pool, visible to ancestors only when helping
/// is enabled.
#[derive(Default)]
struct PoolNode {
    queue: Mutex<VecDeque<Task>>,
    children: Mutex<Vec<Weak<PoolNode>>>,
}

thread_local! {
    static CURRENT_NODE: RefCell<Option<Arc<PoolNode>>> = const { RefCell::new(None) };
}

struct ScopeGuard(Option<Arc<PoolNode>>);

impl ScopeGuard {
    fn enter(node: Option<Arc<PoolNode>>) -> Self {
        Self(CURRENT_NODE.with(|c| std::mem::replace(&mut *c.borrow_mut(), node)))
    }
}

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        let prev = self.0.take();
        CURRENT_NODE.with(|c| *c.borrow_mut() = prev);
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Depth-first search for an unstarted job among `node`'s descendants.
fn find_descendant_task(node: &PoolNode) -> Option<Task> {
    let children: Vec<Arc<PoolNode>> = {
        let mut list = node.children.lock();
        list.retain(|w| w.strong_count() > 0);
        list.iter().filter_map(Weak::upgrade).collect()
    };
    for child in children {
        if let Some(task) = child.queue.lock().pop_back() {
            return Some(task);
        }
        if let Some(task) = find_descendant_task(&child) {
            return Some(task);
        }
    }
    None
}

impl PoolHandle {
    pub fn workers(&self) -> usize {
        self.shared.workers
    }

    /// Workers currently parked and claimable.
    pub fn idle_workers(&self) -> usize {
        self.shared.idle.load(Ordering::SeqCst)
    }

    pub fn options(&self) -> PoolOptions {
        self.shared.options
    }

    fn try_claim(&self) -> bool {
        self.shared
            .idle
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
    }

    /// Runs every job and returns their results in creation order.
    ///
    /// A panicking job does not leave its slot empty: the panic is captured
    /// and reported as [`PoolError::JobPanicked`] once all jobs have drained.
    pub fn run_pool<T: Send + 'static>(&self, jobs: JobPool<T>) -> Result<Vec<T>, PoolError> {
        let n = jobs.jobs.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let options = self.shared.options;
        let slots = Arc::new(Slots::<T>::new(n));
        let node = options.help_while_waiting.then(|| {
            let node = Arc::new(PoolNode::default());
            CURRENT_NODE.with(|c| {
                if let Some(parent) = &*c.borrow() {
                    parent.children.lock().push(Arc::downgrade(&node));
                }
            });
            node
        });

        let mut tasks: VecDeque<Task> = jobs
            .jobs
            .into_iter()
            .enumerate()
            .map(|(index, job)| self.wrap(index, job, &slots, node.clone()))
            .collect();
        let held = if options.hold_primary_job {
            tasks.pop_back()
        } else {
            None
        };

        let counters = &self.shared.counters;
        match &node {
            Some(node) => {
                node.queue.lock().extend(tasks);
                loop {
                    // Helpers may take from the back; the primary takes the front.
                    let next = node.queue.lock().pop_front();
                    let Some(task) = next else { break };
                    self.dispatch_or_inline(task, counters);
                }
            }
            None => {
                for task in tasks {
                    self.dispatch_or_inline(task, counters);
                }
            }
        }
        if let Some(task) = held {
            counters.inlined.fetch_add(1, Ordering::Relaxed);
            task();
        }

        self.wait(&slots, node.as_deref());
        let values: Vec<_> = slots.values.iter().map(|v| v.lock().take()).collect();
        values
            .into_iter()
            .enumerate()
            .map(|(index, v)| match v {
                Some(Ok(value)) => Ok(value),
                Some(Err(message)) => Err(PoolError::JobPanicked { index, message }),
                None => Err(PoolError::SlotMissing { index }),
            })
            .collect()
    }

    fn wrap<T: Send + 'static>(
        &self,
        index: usize,
        job: BoxedJob<T>,
        slots: &Arc<Slots<T>>,
        node: Option<Arc<PoolNode>>,
    ) -> Task {
        let slots = Arc::clone(slots);
        let shared = Arc::clone(&self.shared);
        Box::new(move || {
            let result = {
                let _scope = ScopeGuard::enter(node);
                catch_unwind(AssertUnwindSafe(job)).map_err(panic_message)
            };
            slots.fill(index, result, &shared.counters);
        })
    }

    fn dispatch_or_inline(&self, task: Task, counters: &Counters) {
        if self.try_claim() {
            counters.dispatched.fetch_add(1, Ordering::Relaxed);
            if let Err(err) = self.shared.sender.send(Message::Run(task)) {
                // Channel closed: give the reservation back and run here.
                self.shared.idle.fetch_add(1, Ordering::SeqCst);
                if let Message::Run(task) = err.into_inner() {
                    task();
                }
            }
        } else {
            counters.inlined.fetch_add(1, Ordering::Relaxed);
            task();
        }
    }

    fn wait<T>(&self, slots: &Slots<T>, node: Option<&PoolNode>) {
        let counters = &self.shared.counters;
        match node {
            None => {
                let mut pending = slots.pending.lock();
                while *pending > 0 {
                    slots.done.wait(&mut pending);
                }
            }
            Some(node) => loop {
                if *slots.pending.lock() == 0 {
                    break;
                }
                if let Some(task) = find_descendant_task(node) {
                    counters.helped.fetch_add(1, Ordering::Relaxed);
                    task();
                    continue;
                }
                let mut pending = slots.pending.lock();
                if *pending > 0 {
                    slots
                        .done
                        .wait_for(&mut pending, Duration::from_micros(200));
                }
            },
        }
    }

    pub fn stats(&self) -> PoolStats {
        let c = &self.shared.counters;
        PoolStats {
            jobs_dispatched: c.dispatched.load(Ordering::SeqCst),
            jobs_inlined: c.inlined.load(Ordering::SeqCst),
            jobs_helped: c.helped.load(Ordering::SeqCst),
            peak_concurrency: c.peak.load(Ordering::SeqCst),
            idle_time: c
                .idle_nanos
                .iter()
                .map(|n| Duration::from_nanos(n.load(Ordering::Relaxed)))
                .collect(),
            slot_violations: c.slot_violations.load(Ordering::SeqCst),
        }
    }

    /// Zeroes every counter. Only meaningful between runs.
    pub fn reset_stats(&self) {
        let c = &self.shared.counters;
        c.dispatched.store(0, Ordering::SeqCst);
        c.inlined.store(0, Ordering::SeqCst);
        c.helped.store(0, Ordering::SeqCst);
        c.peak
            .store(c.running.load(Ordering::SeqCst), Ordering::SeqCst);
        c.slot_violations.store(0, Ordering::SeqCst);
        for n in &c.idle_nanos {
            n.store(0, Ordering::Relaxed);
        }
    }
}
