#include "focus/kernels.hpp"

#include <cmath>
#include <exception>
#include <string>

#include <omp.h>

#include "focus/error.hpp"

namespace focus::kernels {

std::string_view to_string(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

Exec exec_from_string(std::string_view s) {
  if (s == "serial") return Exec::serial;
  if (s == "parallel") return Exec::parallel;
  fail(ErrorKind::config, "unknown execution policy '" + std::string(s) + "'");
}

int max_threads() { return omp_get_max_threads(); }

nn::LossAndGrad batch_loss_grad_serial(const nn::MlpParams& params, const RowMatrix& inputs,
                                       const nn::OutputLoss& loss) {
  return nn::loss_and_grad(params, inputs, loss);
}

namespace {

void add_into(nn::Gradients& dst, const nn::Gradients& src) {
  for (std::size_t l = 0; l < dst.weights.size(); ++l) {
    for (std::size_t i = 0; i < dst.weights[l].size(); ++i) dst.weights[l][i] += src.weights[l][i];
    for (std::size_t i = 0; i < dst.biases[l].size(); ++i) dst.biases[l][i] += src.biases[l][i];
  }
}

// Exceptions must not escape an OpenMP region; the first one is rethrown after.
class ErrorSlot {
 public:
  template <typename F>
  void run(F&& f) {
    try {
      f();
    } catch (...) {
#pragma omp critical(focus_kernel_error)
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

}  // namespace

nn::LossAndGrad batch_loss_grad_parallel(const nn::MlpParams& params, const RowMatrix& inputs,
                                         const nn::OutputLoss& loss) {
  if (inputs.rows == 0) fail(ErrorKind::config, "loss over an empty batch");
  const std::size_t n_blocks = (inputs.rows + kBlockRows - 1) / kBlockRows;
  const double inv_n = 1.0 / static_cast<double>(inputs.rows);
  std::vector<nn::Gradients> partial(n_blocks);
  std::vector<double> partial_loss(n_blocks, 0.0);
  ErrorSlot errors;

#pragma omp parallel for schedule(static) if (n_blocks > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n_blocks); ++b) {
    errors.run([&] {
      nn::Workspace ws;
      ws.reserve(params);
      nn::Gradients g = nn::zeros_like(params);
      std::vector<double> d_out(params.output_size());
      double acc = 0.0;
      const std::size_t begin = static_cast<std::size_t>(b) * kBlockRows;
      const std::size_t end = std::min(begin + kBlockRows, inputs.rows);
      for (std::size_t r = begin; r < end; ++r) {
        auto out = ws.forward(params, inputs.row(r));
        std::fill(d_out.begin(), d_out.end(), 0.0);
        const double value = loss(r, out, d_out);
        if (!std::isfinite(value)) fail(ErrorKind::numerical, "non-finite loss at example " + std::to_string(r));
        acc += value;
        ws.backward(params, d_out, g, inv_n);
      }
      partial[b] = std::move(g);
      partial_loss[b] = acc;
    });
  }
  errors.rethrow();

  nn::LossAndGrad result{0.0, std::move(partial[0])};
  result.loss = partial_loss[0];
  for (std::size_t b = 1; b < n_blocks; ++b) {
    add_into(result.grads, partial[b]);
    result.loss += partial_loss[b];
  }
  result.loss *= inv_n;
  return result;
}

nn::LossAndGrad batch_loss_grad(const nn::MlpParams& params, const RowMatrix& inputs,
                                const nn::OutputLoss& loss, Exec exec) {
  return exec == Exec::serial ? batch_loss_grad_serial(params, inputs, loss)
                              : batch_loss_grad_parallel(params, inputs, loss);
}

RowMatrix batch_forward_serial(const nn::MlpParams& params, const RowMatrix& inputs) {
  RowMatrix out(inputs.rows, params.output_size());
  nn::Workspace ws;
  for (std::size_t r = 0; r < inputs.rows; ++r) {
    auto y = ws.forward(params, inputs.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

RowMatrix batch_forward_parallel(const nn::MlpParams& params, const RowMatrix& inputs) {
  RowMatrix out(inputs.rows, params.output_size());
  const std::size_t n_blocks = (inputs.rows + kBlockRows - 1) / kBlockRows;
  ErrorSlot errors;
#pragma omp parallel for schedule(static) if (n_blocks > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n_blocks); ++b) {
    errors.run([&] {
      nn::Workspace ws;
      const std::size_t begin = static_cast<std::size_t>(b) * kBlockRows;
      const std::size_t end = std::min(begin + kBlockRows, inputs.rows);
      for (std::size_t r = begin; r < end; ++r) {
        auto y = ws.forward(params, inputs.row(r));
        std::copy(y.begin(), y.end(), out.row(r).begin());
      }
    });
  }
  errors.rethrow();
  return out;
}

RowMatrix batch_forward(const nn::MlpParams& params, const RowMatrix& inputs, Exec exec) {
  return exec == Exec::serial ? batch_forward_serial(params, inputs)
                              : batch_forward_parallel(params, inputs);
}

}  // namespace focus::kernels
