#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace policylens {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input document. `line` is 1-based, 0 when unknown.
class parse_error : public error {
  public:
    parse_error(std::string const& what, std::size_t line = 0, std::string field = {})
        : error(format(what, line, field)), m_line(line), m_field(std::move(field))
    {}

    [[nodiscard]] std::size_t line() const noexcept { return m_line; }
    [[nodiscard]] std::string const& field() const noexcept { return m_field; }

  private:
    static std::string format(std::string const& what, std::size_t line, std::string const& field)
    {
        std::string out = "parse error";
        if (line != 0) {
            out += " at line " + std::to_string(line);
        }
        if (!field.empty()) {
            out += " (field '" + field + "')";
        }
        return out + ": " + what;
    }

    std::size_t m_line;
    std::string m_field;
};

/// A structural invariant does not hold. `offender` names the id at fault.
class invariant_error : public error {
  public:
    invariant_error(std::string const& what, std::string offender)
        : error(what + ": '" + offender + "'"), m_offender(std::move(offender))
    {}

    [[nodiscard]] std::string const& offender() const noexcept { return m_offender; }

  private:
    std::string m_offender;
};

class unknown_category_error : public error {
  public:
    explicit unknown_category_error(std::string const& id)
        : error("unknown category '" + id + "'")
    {}
};

/// Labels that do not resolve against the taxonomy.
class unknown_label_error : public error {
  public:
    explicit unknown_label_error(std::vector<std::string> offenders)
        : error(format(offenders)), m_offenders(std::move(offenders))
    {}

    [[nodiscard]] std::vector<std::string> const& offenders() const noexcept { return m_offenders; }

  private:
    static std::string format(std::vector<std::string> const& offenders)
    {
        std::string out = "unknown labels:";
        for (auto const& o : offenders) {
            out += " " + o;
        }
        return out;
    }

    std::vector<std::string> m_offenders;
};

class corruption_error : public error {
  public:
    using error::error;
};

class version_error : public error {
  public:
    using error::error;
};

class untrained_model_error : public error {
  public:
    using error::error;
};

/// Raised when a question carries no classification signal.
class ambiguous_question_error : public error {
  public:
    using error::error;
};

}  // namespace policylens
