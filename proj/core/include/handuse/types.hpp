#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace handuse {

/// Failure class of an error; the CLI maps these onto exit codes 1 and 2.
enum class ErrorKind { validation, io };

/// Library error. `kind` distinguishes bad input data from unreadable files.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorKind::validation, what); }
[[noreturn]] inline void fail_io(const std::string& what) { throw Error(ErrorKind::io, what); }

enum class Side : std::uint8_t { left, right };
enum class Dataset : std::uint8_t { home, homelab };
enum class TaskKind : std::uint8_t { unimanual, bimanual, negative };
enum class Role : std::uint8_t { none, manipulator, stabilizer };
enum class HandCategory : std::uint8_t { more_affected, less_affected };
enum class ContactState : std::uint8_t {
  no_contact,
  self_contact,
  other_person,
  portable_object,
  non_portable_object,
};

/// Which binary classification a pipeline run addresses.
enum class Mode : std::uint8_t { interaction, role };

/// LOSOCV training condition.
enum class Condition : std::uint8_t { home_only, both_datasets };

/// Where per-frame predictions come from during evaluation.
enum class ModelSource : std::uint8_t { forest, external_windows, external_contacts };

std::string_view to_string(Side v);
std::string_view to_string(Dataset v);
std::string_view to_string(TaskKind v);
std::string_view to_string(Role v);
std::string_view to_string(HandCategory v);
std::string_view to_string(ContactState v);
std::string_view to_string(Mode v);
std::string_view to_string(Condition v);
std::string_view to_string(ModelSource v);

// Parsers throw Error(validation) naming the offending token.
Side parse_side(std::string_view s);
Dataset parse_dataset(std::string_view s);
TaskKind parse_task_kind(std::string_view s);
Role parse_role(std::string_view s);
ContactState parse_contact_state(std::string_view s);
Mode parse_mode(std::string_view s);
Condition parse_condition(std::string_view s);
ModelSource parse_model_source(std::string_view s);

/// Axis-aligned pixel rectangle (x, y) top-left, (w, h) extent.
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const noexcept { return static_cast<long long>(w) * h; }
  bool empty() const noexcept { return w <= 0 || h <= 0; }
  bool contains(int px, int py) const noexcept {
    return px >= x && py >= y && px < x + w && py < y + h;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct FrameSize {
  int width = 720;
  int height = 405;
  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

/// Clip `b` to the frame rectangle. Result may be empty if `b` lies outside.
Box clamp_to_frame(Box b, FrameSize frame);

/// Grow `b` by `fraction` of its width/height on each side, then clamp.
Box dilate(Box b, double fraction, FrameSize frame);

}  // namespace handuse
