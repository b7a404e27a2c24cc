#pragma once

#include <exception>
#include <mutex>

namespace tsm {

/// Kernels with independent work items come in two flavours: a plain loop
/// kept as the reference, and an OpenMP loop. Results must be identical.
enum class Execution { Serial, Parallel };

/// Keeps the first exception thrown inside an OpenMP region so it can be
/// rethrown on the calling thread after the region ends.
class ExceptionSlot {
 public:
  template <typename F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

int max_threads();

}  // namespace tsm
