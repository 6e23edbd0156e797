#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>
#include <variant>

namespace q2d {

template <class E>
struct Unexpected {
  E error;
};

template <class E>
Unexpected<std::decay_t<E>> unexpected(E&& e) {
  return {std::forward<E>(e)};
}

struct BadExpectedAccess : std::logic_error {
  BadExpectedAccess() : std::logic_error("accessed value of an Expected holding an error") {}
};

// Minimal value-or-error holder; std::expected is C++23.
template <class T, class E>
class Expected {
 public:
  Expected(T value) : state_(std::in_place_index<0>, std::move(value)) {}
  Expected(Unexpected<E> err) : state_(std::in_place_index<1>, std::move(err.error)) {}

  bool has_value() const noexcept { return state_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  const T& value() const& {
    if (!has_value()) throw BadExpectedAccess();
    return std::get<0>(state_);
  }
  T& value() & {
    if (!has_value()) throw BadExpectedAccess();
    return std::get<0>(state_);
  }
  T&& value() && {
    if (!has_value()) throw BadExpectedAccess();
    return std::get<0>(std::move(state_));
  }
  const E& error() const { return std::get<1>(state_); }

  const T& operator*() const& { return value(); }
  T& operator*() & { return value(); }
  const T* operator->() const { return &value(); }
  T* operator->() { return &value(); }

 private:
  std::variant<T, E> state_;
};

}  // namespace q2d
