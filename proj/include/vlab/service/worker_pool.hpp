#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vlab::service {

/// Fixed number of threads draining a FIFO of jobs. Jobs must not throw.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t threads);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    void post(std::function<void()> job);
    /// Blocks until the queue is empty and no job is executing.
    void wait_idle();
    /// Finishes queued jobs, then joins. Later posts are dropped.
    void stop();

    std::size_t size() const { return threads_.size(); }

private:
    std::mutex mu_;
    std::condition_variable work_cv_, idle_cv_;
    std::deque<std::function<void()>> queue_;
    std::size_t busy_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> threads_;

    void loop();
};

} // namespace vlab::service
