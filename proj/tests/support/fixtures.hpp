#pragma once

#include <fanout/workspace.hpp>

#include <fanout/error.hpp>

#include <string>

namespace fanout::testing {

inline std::string data_dir(const std::string &name) { return std::string(FANOUT_DATA_DIR) + "/" + name; }

/// The retail database of the running example (null token "N").
inline Workspace retail()
{
    return load_workspace(data_dir("retail") + "/graph.json", data_dir("retail") + "/semantic.json");
}

/// The three-relation gender-bias example.
inline Workspace bias()
{
    return load_workspace(data_dir("bias") + "/graph.json", data_dir("bias") + "/semantic.json");
}

/// Code of the fanout::Error thrown by `f`, or "none".
template<typename F>
std::string error_code(F &&f)
{
    try {
        f();
    } catch (const Error &e) {
        return e.code();
    }
    return "none";
}

inline ExploratoryQuery query(const Workspace &ws, const std::string &metric, std::vector<std::string> group_by = {},
                              std::vector<std::string> joins = {})
{
    ExploratoryQuery q;
    q.base = ws.semantic.base_query(metric);
    q.group_by = std::move(group_by);
    q.joins = std::move(joins);
    return q;
}

}
