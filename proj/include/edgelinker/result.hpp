#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>
#include <variant>

namespace edgelinker {

template <typename E>
struct Err {
    E value;
};
template <typename E>
Err(E) -> Err<E>;

class BadResultAccess : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Value-or-error return type used across the protocol layers. Errors that
// callers are expected to branch on (rejections, denials) travel through
// Result; configuration and programming errors throw.
template <typename T, typename E>
class [[nodiscard]] Result {
public:
    Result(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
    Result(Err<E> err) : storage_(std::in_place_index<1>, std::move(err.value)) {}

    bool ok() const noexcept { return storage_.index() == 0; }
    explicit operator bool() const noexcept { return ok(); }

    T& value() & {
        if (!ok()) throw BadResultAccess("Result holds an error");
        return std::get<0>(storage_);
    }
    const T& value() const& {
        if (!ok()) throw BadResultAccess("Result holds an error");
        return std::get<0>(storage_);
    }
    T&& value() && {
        if (!ok()) throw BadResultAccess("Result holds an error");
        return std::get<0>(std::move(storage_));
    }
    const E& error() const {
        if (ok()) throw BadResultAccess("Result holds a value");
        return std::get<1>(storage_);
    }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, E> storage_;
};

template <typename E>
class [[nodiscard]] Result<void, E> {
public:
    Result() = default;
    Result(Err<E> err) : error_(std::move(err.value)), failed_(true) {}

    bool ok() const noexcept { return !failed_; }
    explicit operator bool() const noexcept { return ok(); }
    const E& error() const {
        if (ok()) throw BadResultAccess("Result holds a value");
        return error_;
    }

private:
    E error_{};
    bool failed_ = false;
};

template <typename E>
using Status = Result<void, E>;

}  // namespace edgelinker
