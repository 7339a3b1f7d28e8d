#include "handuse/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace handuse {
namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Side, 2> kSides{{{Side::left, "left"}, {Side::right, "right"}}};
constexpr NameTable<Dataset, 2> kDatasets{{{Dataset::home, "home"}, {Dataset::homelab, "homelab"}}};
constexpr NameTable<TaskKind, 3> kKinds{{{TaskKind::unimanual, "unimanual"},
                                         {TaskKind::bimanual, "bimanual"},
                                         {TaskKind::negative, "negative"}}};
constexpr NameTable<Role, 3> kRoles{
    {{Role::none, "none"}, {Role::manipulator, "manipulator"}, {Role::stabilizer, "stabilizer"}}};
constexpr NameTable<HandCategory, 2> kCategories{
    {{HandCategory::more_affected, "more_affected"}, {HandCategory::less_affected, "less_affected"}}};
constexpr NameTable<ContactState, 5> kContacts{{{ContactState::no_contact, "no_contact"},
                                                {ContactState::self_contact, "self_contact"},
                                                {ContactState::other_person, "other_person"},
                                                {ContactState::portable_object, "portable_object"},
                                                {ContactState::non_portable_object, "non_portable_object"}}};
constexpr NameTable<Mode, 2> kModes{{{Mode::interaction, "interaction"}, {Mode::role, "role"}}};
constexpr NameTable<Condition, 2> kConditions{
    {{Condition::home_only, "home_only"}, {Condition::both_datasets, "both_datasets"}}};
constexpr NameTable<ModelSource, 3> kSources{{{ModelSource::forest, "forest"},
                                              {ModelSource::external_windows, "external_windows"},
                                              {ModelSource::external_contacts, "external_contacts"}}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E v) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

template <typename E, std::size_t N>
E parse(const NameTable<E, N>& table, std::string_view s, const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  fail(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Side v) { return name_of(kSides, v); }
std::string_view to_string(Dataset v) { return name_of(kDatasets, v); }
std::string_view to_string(TaskKind v) { return name_of(kKinds, v); }
std::string_view to_string(Role v) { return name_of(kRoles, v); }
std::string_view to_string(HandCategory v) { return name_of(kCategories, v); }
std::string_view to_string(ContactState v) { return name_of(kContacts, v); }
std::string_view to_string(Mode v) { return name_of(kModes, v); }
std::string_view to_string(Condition v) { return name_of(kConditions, v); }
std::string_view to_string(ModelSource v) { return name_of(kSources, v); }

Side parse_side(std::string_view s) { return parse(kSides, s, "hand side"); }
Dataset parse_dataset(std::string_view s) { return parse(kDatasets, s, "dataset"); }
TaskKind parse_task_kind(std::string_view s) { return parse(kKinds, s, "task kind"); }
Role parse_role(std::string_view s) { return parse(kRoles, s, "role"); }
ContactState parse_contact_state(std::string_view s) { return parse(kContacts, s, "contact state"); }
Mode parse_mode(std::string_view s) { return parse(kModes, s, "mode"); }
Condition parse_condition(std::string_view s) { return parse(kConditions, s, "condition"); }
ModelSource parse_model_source(std::string_view s) { return parse(kSources, s, "model source"); }

Box clamp_to_frame(Box b, FrameSize frame) {
  const int x0 = std::clamp(b.x, 0, frame.width);
  const int y0 = std::clamp(b.y, 0, frame.height);
  const int x1 = std::clamp(b.x + b.w, 0, frame.width);
  const int y1 = std::clamp(b.y + b.h, 0, frame.height);
  return Box{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

Box dilate(Box b, double fraction, FrameSize frame) {
  const int dx = static_cast<int>(std::lround(b.w * fraction));
  const int dy = static_cast<int>(std::lround(b.h * fraction));
  return clamp_to_frame(Box{b.x - dx, b.y - dy, b.w + 2 * dx, b.h + 2 * dy}, frame);
}

}  // namespace handuse
