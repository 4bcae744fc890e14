#pragma once

#include "policylens/default_taxonomy_json.hpp"
#include "policylens/taxonomy.hpp"

namespace policylens {

/// The bundled OPP-115 style taxonomy (data/taxonomy.json).
inline taxonomy const& default_taxonomy()
{
    static taxonomy const t = load_taxonomy(detail::default_taxonomy_json);
    return t;
}

}  // namespace policylens
