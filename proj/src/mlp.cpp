#include "nsdn/mlp.hpp"

namespace nsdn {

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + name + "'");
}

template class Mlp<double>;

}  // namespace nsdn
