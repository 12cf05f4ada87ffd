#include "vlab/service/worker_pool.hpp"

#include <stdexcept>

namespace vlab::service {

WorkerPool::WorkerPool(std::size_t threads)
{
    if (threads == 0)
        throw std::invalid_argument("worker pool needs at least one thread");
    threads_.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i)
        threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::post(std::function<void()> job)
{
    {
        std::lock_guard lk(mu_);
        if (stopping_)
            return;
        queue_.push_back(std::move(job));
    }
    work_cv_.notify_one();
}

void WorkerPool::wait_idle()
{
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [this] { return queue_.empty() && busy_ == 0; });
}

void WorkerPool::stop()
{
    {
        std::lock_guard lk(mu_);
        if (stopping_ && threads_.empty())
            return;
        stopping_ = true;
    }
    work_cv_.notify_all();
    for (auto& t : threads_)
        if (t.joinable())
            t.join();
    threads_.clear();
}

void WorkerPool::loop()
{
    for (;;) {
        std::function<void()> job;
        {
            std::unique_lock lk(mu_);
            work_cv_.wait(lk, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty())
                return;
            job = std::move(queue_.front());
            queue_.pop_front();
            ++busy_;
        }
        job();
        {
            std::lock_guard lk(mu_);
            --busy_;
            if (queue_.empty() && busy_ == 0)
                idle_cv_.notify_all();
        }
    }
}

} // namespace vlab::service
