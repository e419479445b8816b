#pragma once

#include <string_view>

#include "focus/matrix.hpp"
#include "focus/nn.hpp"

// Batched network kernels. Each has a serial reference (the plain per-example
// loop in nn::loss_and_grad) and an OpenMP version. The OpenMP version splits
// the batch into fixed blocks of kBlockRows examples and reduces block
// partials in block order, so its result does not depend on the thread count.
namespace focus::kernels {

enum class Exec { serial, parallel };

std::string_view to_string(Exec e);
Exec exec_from_string(std::string_view s);

inline constexpr std::size_t kBlockRows = 16;

nn::LossAndGrad batch_loss_grad_serial(const nn::MlpParams& params, const RowMatrix& inputs,
                                       const nn::OutputLoss& loss);
nn::LossAndGrad batch_loss_grad_parallel(const nn::MlpParams& params, const RowMatrix& inputs,
                                         const nn::OutputLoss& loss);
nn::LossAndGrad batch_loss_grad(const nn::MlpParams& params, const RowMatrix& inputs,
                                const nn::OutputLoss& loss, Exec exec);

// Forward pass of every row; parallel and serial results are bit-identical.
RowMatrix batch_forward_serial(const nn::MlpParams& params, const RowMatrix& inputs);
RowMatrix batch_forward_parallel(const nn::MlpParams& params, const RowMatrix& inputs);
RowMatrix batch_forward(const nn::MlpParams& params, const RowMatrix& inputs, Exec exec);

int max_threads();

}  // namespace focus::kernels
