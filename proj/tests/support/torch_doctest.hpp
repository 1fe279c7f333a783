#pragma once

// libtorch's logging header defines a CHECK macro of its own. Pull torch in
// first and drop that definition so doctest's assertions are the ones used.
#include <torch/torch.h>

#undef CHECK

#include <doctest.h>
