from naturalmos.autograd.tensor import (ParameterSet, Tensor, as_tensor, backward, flatten, get_default_dtype,
                                       getitem, precision, reshape, tensor_sum, weighted_sum)
from naturalmos.autograd.layers import (batchnorm2d, conv2d, dropout, linear, maxpool2d_ceil, mse_loss,
                                        pad_sequences, relu)
from naturalmos.autograd.recurrent import bilstm, init_lstm_weights
from naturalmos.autograd.optim import Adam, adam_step
from naturalmos.autograd.gradcheck import finite_diff_gradcheck, run_gradcheck_suite
